from __future__ import annotations

import json
import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from fuzzymt.errors import ArgumentError
from fuzzymt.mt_metrics import (
    EvalPair,
    bleu,
    chrf_pp,
    score_all,
    ter,
    ter_segment_edits,
    tokenize_13a,
)

DATA = Path(__file__).parent / "data"


def load_fixture():
    pairs = []
    for line in (DATA / "metrics_fixture.tsv").read_text(encoding="utf-8").splitlines():
        hyp, ref = line.split("\t")
        pairs.append(EvalPair(hyp, ref))
    return pairs


def frozen_values():
    return json.loads((DATA / "metrics_expected.json").read_text(encoding="utf-8"))


from oracles import exhaustive_shift_edits, lev_oracle

# -- tokenizer --------------------------------------------------------------------


class TestTokenizer:
    def test_punctuation_split(self):
        assert tokenize_13a("Hello, world!") == ["Hello", ",", "world", "!"]

    def test_digit_internal_comma_kept(self):
        assert tokenize_13a("1,200 sites") == ["1,200", "sites"]

    def test_trailing_period_split(self):
        assert tokenize_13a("done.") == ["done", "."]

    def test_dash_after_digit(self):
        assert tokenize_13a("5-mg") == ["5", "-", "mg"]


# -- BLEU -------------------------------------------------------------------------


class TestBleu:
    def test_perfect_match_is_exactly_100(self):
        pairs = [EvalPair("the cat sat on the mat", "the cat sat on the mat")] * 3
        assert bleu(pairs).value == 100.0

    def test_all_empty_hypotheses_zero(self):
        pairs = [EvalPair("", "some reference here okay")] * 2
        assert bleu(pairs).value == 0.0

    def test_fixture_frozen_value(self):
        assert bleu(load_fixture()).value == pytest.approx(frozen_values()["bleu"], abs=1e-9)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ArgumentError):
            bleu([])

    def test_empty_reference_rejected(self):
        with pytest.raises(ArgumentError):
            bleu([EvalPair("x", "")])

    def test_brevity_penalty_applies(self):
        short = [EvalPair("the cat sat on the", "the cat sat on the mat")]
        full = [EvalPair("the cat sat on the mat", "the cat sat on the mat")]
        import math

        assert bleu(short).value == pytest.approx(100.0 * math.exp(1 - 6 / 5), abs=1e-9)
        assert bleu(full).value == 100.0

    def test_hypothesis_shorter_than_max_order_scores_zero(self):
        assert bleu([EvalPair("the cat", "the cat sat on the mat")]).value == 0.0


# -- chrF++ -----------------------------------------------------------------------


class TestChrfPP:
    def test_identity_exactly_100(self):
        pairs = [EvalPair("identical sentences here", "identical sentences here")]
        assert chrf_pp(pairs).value == 100.0

    def test_disjoint_characters_zero(self):
        pairs = [EvalPair("zzz qqq", "aaa bbb")]
        assert chrf_pp(pairs).value == pytest.approx(0.0, abs=1e-9)

    def test_fixture_frozen_value(self):
        assert chrf_pp(load_fixture()).value == pytest.approx(frozen_values()["chrf_pp"], abs=1e-9)

    def test_recall_weighted_twice(self):
        # dropping hypothesis content hurts more than adding it (beta = 2)
        ref = "alpha beta gamma delta"
        shorter = chrf_pp([EvalPair("alpha beta", ref)]).value
        longer = chrf_pp([EvalPair(ref + " extra junk", ref)]).value
        assert shorter < longer


# -- TER --------------------------------------------------------------------------


class TestTer:
    def test_identity_zero(self):
        pairs = [EvalPair("same words here", "same words here")]
        assert ter(pairs).value == 0.0

    def test_single_substitution(self):
        assert ter([EvalPair("a b x d", "a b c d")]).value == 25.0

    def test_block_shift_counts_one_edit(self):
        assert ter([EvalPair("c d a b", "a b c d")]).value == 25.0

    def test_hand_instances_match_exhaustive_oracle(self):
        for hyp, ref in (("a b x d", "a b c d"), ("c d a b", "a b c d")):
            greedy = ter_segment_edits(tuple(hyp.split()), tuple(ref.split()))
            assert greedy == exhaustive_shift_edits(hyp.split(), ref.split())

    def test_fixture_frozen_value(self):
        assert ter(load_fixture()).value == pytest.approx(frozen_values()["ter"], abs=1e-9)

    def test_empty_hypothesis_all_deletions(self):
        assert ter([EvalPair("", "a b c d")]).value == 100.0

    @settings(max_examples=150, deadline=None)
    @given(
        st.lists(st.sampled_from("abcd"), min_size=1, max_size=8),
        st.lists(st.sampled_from("abcd"), min_size=1, max_size=8),
    )
    def test_shift_never_beats_plain_edit_distance(self, hyp, ref):
        greedy = ter_segment_edits(tuple(hyp), tuple(ref))
        assert greedy <= lev_oracle(hyp, ref)


# -- cross-metric properties --------------------------------------------------------

VOCAB = ["luna", "rio", "campo", "mesa", "libro", "nube", "perro", "gato",
         "casa", "flor", "monte", "lago", "pan"]


def _identity_corpus(rng: random.Random):
    pairs = []
    for _ in range(rng.randint(2, 5)):
        words = rng.sample(VOCAB, rng.randint(4, 9))
        text = " ".join(words)
        pairs.append(EvalPair(text, text))
    return pairs


class TestIdentityAndRanges:
    def test_identity_over_randomized_corpora(self):
        rng = random.Random(20240)
        for _ in range(100):
            pairs = _identity_corpus(rng)
            assert bleu(pairs).value == 100.0
            assert chrf_pp(pairs).value == 100.0
            assert ter(pairs).value == 0.0

    @settings(max_examples=80, deadline=None)
    @given(st.data())
    def test_ranges(self, data):
        rng = random.Random(data.draw(st.integers(0, 2**20)))
        pairs = []
        for _ in range(rng.randint(1, 4)):
            ref = " ".join(rng.sample(VOCAB, rng.randint(2, 6)))
            hyp = " ".join(rng.choices(VOCAB, k=rng.randint(0, 6)))
            pairs.append(EvalPair(hyp, ref))
        b, c, t = (s.value for s in score_all(pairs))
        assert 0.0 <= b <= 100.0
        assert 0.0 <= c <= 100.0
        assert t >= 0.0


class TestMonotoneDegradation:
    @settings(max_examples=120, deadline=None)
    @given(st.data())
    def test_oov_replacement_degrades(self, data):
        rng = random.Random(data.draw(st.integers(0, 2**20)))
        n = rng.randint(2, 7)
        ref_words = rng.sample(VOCAB, n)
        hyp_words = list(ref_words)
        if rng.random() < 0.5 and n >= 2:
            i, j = rng.sample(range(n), 2)
            hyp_words[i], hyp_words[j] = hyp_words[j], hyp_words[i]
        if rng.random() < 0.4:
            hyp_words[rng.randrange(n)] = rng.choice(VOCAB)
        correct = [i for i in range(n) if hyp_words[i] == ref_words[i]]
        if not correct:
            return
        pos = rng.choice(correct)
        degraded = list(hyp_words)
        degraded[pos] = "q" * len(hyp_words[pos])
        ref = " ".join(ref_words)
        before = [EvalPair(" ".join(hyp_words), ref)]
        after = [EvalPair(" ".join(degraded), ref)]
        assert bleu(after).value <= bleu(before).value + 1e-9
        assert chrf_pp(after).value <= chrf_pp(before).value + 1e-9
        assert ter(after).value >= ter(before).value - 1e-9


def test_score_all_names_and_directions():
    scores = score_all([EvalPair("a b c d", "a b c d")])
    assert [(s.name, s.direction) for s in scores] == [
        ("BLEU", "higher-better"),
        ("chrF++", "higher-better"),
        ("TER", "lower-better"),
    ]
