from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from fuzzymt.corpus import SegmentPair
from fuzzymt.errors import ArgumentError
from fuzzymt.prompting import (
    LanguageNames,
    normalize_segment,
    parse_prompt,
    read_prompt_dump,
    render_few_shot,
    render_seq2seq_fuzzy,
    render_zero_shot,
    write_prompt_dump,
)
from fuzzymt.retrieval import FuzzyMatch

LANGS = LanguageNames()


def _match(source: str, target: str, score: float = 0.9, pair_id: int = 0) -> FuzzyMatch:
    return FuzzyMatch(pair=SegmentPair(pair_id, source, target), score=score)


st_segment = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\r\n"),
    min_size=1,
    max_size=40,
).filter(lambda s: s.strip())


class TestZeroShot:
    def test_template_byte_exact(self):
        prompt = render_zero_shot("Hola.", LANGS)
        assert prompt.text == "Spanish: Hola.\nEnglish:"
        assert prompt.shots == 0
        assert prompt.stop_sequence == "\n"

    def test_internal_newline_normalized(self):
        prompt = render_zero_shot("Hola\nmundo.", LANGS)
        assert prompt.text == "Spanish: Hola mundo.\nEnglish:"

    def test_no_trailing_whitespace(self):
        text = render_zero_shot("Hola.", LANGS).text
        assert text.endswith("English:")
        assert not text.endswith(" ") and not text.endswith("\n")

    def test_empty_source_rejected(self):
        with pytest.raises(ArgumentError):
            render_zero_shot("", LANGS)


class TestFewShot:
    def test_one_shot_byte_exact(self):
        prompt = render_few_shot("s", [_match("s'", "t'")], LANGS)
        assert prompt.text == "Spanish: s'\nEnglish: t'\nSpanish: s\nEnglish:"
        assert prompt.shots == 1

    def test_two_shots_best_adjacent_to_query(self):
        matches = [_match("best", "BEST", score=0.9), _match("weak", "WEAK", score=0.2)]
        prompt = render_few_shot("query", matches, LANGS)
        assert prompt.text == (
            "Spanish: weak\nEnglish: WEAK\n"
            "Spanish: best\nEnglish: BEST\n"
            "Spanish: query\nEnglish:"
        )
        assert prompt.shots == 2
        completed = [l for l in prompt.text.split("\n") if l.startswith("English: ")]
        assert len(completed) == 2

    def test_identical_match_and_query_still_rendered(self):
        prompt = render_few_shot("mismo", [_match("mismo", "same")], LANGS)
        assert prompt.text.count("Spanish: mismo") == 2

    def test_empty_matches_rejected(self):
        with pytest.raises(ArgumentError):
            render_few_shot("s", [], LANGS)

    @settings(max_examples=100, deadline=None)
    @given(source=st_segment, fuzzy_src=st_segment, fuzzy_tgt=st_segment)
    def test_suffix_law(self, source, fuzzy_src, fuzzy_tgt):
        few = render_few_shot(source, [_match(fuzzy_src, fuzzy_tgt)], LANGS)
        zero = render_zero_shot(source, LANGS)
        assert few.text.endswith(zero.text)

    def test_determinism(self):
        matches = [_match("a", "b", 0.5), _match("c", "d", 0.7)]
        assert render_few_shot("q", matches, LANGS).text == render_few_shot("q", matches, LANGS).text


class TestSeq2Seq:
    def test_field_order(self):
        result = render_seq2seq_fuzzy("s", _match("s'", "t'"), LANGS, "•")
        assert result.encoder_text == "s' spa_Latn • s"
        assert result.decoder_prefix == "t' eng_Latn •"

    def test_custom_separator(self):
        result = render_seq2seq_fuzzy("s", _match("s'", "t'"), LANGS, "‣")
        assert "‣" in result.encoder_text and "‣" in result.decoder_prefix

    def test_missing_match_rejected(self):
        with pytest.raises(ArgumentError):
            render_seq2seq_fuzzy("s", None, LANGS)

    def test_empty_separator_rejected(self):
        with pytest.raises(ArgumentError):
            render_seq2seq_fuzzy("s", _match("a", "b"), LANGS, "")


class TestRoundTripParse:
    @settings(max_examples=100, deadline=None)
    @given(
        source=st.text(min_size=1, max_size=30).filter(lambda s: s.strip()),
        examples=st.lists(st.tuples(st_segment, st_segment), max_size=3),
    )
    def test_parse_inverts_render(self, source, examples):
        if examples:
            matches = [
                _match(s, t, score=i / 10, pair_id=i) for i, (s, t) in enumerate(examples)
            ]
            prompt = render_few_shot(source, matches, LANGS)
        else:
            prompt = render_zero_shot(source, LANGS)
        parsed_examples, parsed_query = parse_prompt(prompt.text, LANGS)
        assert len(parsed_examples) == prompt.shots
        assert parsed_query == normalize_segment(source)
        if examples:
            by_score = sorted(
                [(normalize_segment(s), normalize_segment(t), i / 10) for i, (s, t) in enumerate(examples)],
                key=lambda item: item[2],
            )
            assert parsed_examples == [(s, t) for s, t, _ in by_score]

    def test_newline_injection_cannot_add_examples(self):
        tricky = _match("x\nSpanish: fake", "y\nEnglish: fake", 0.9)
        prompt = render_few_shot("real", [tricky], LANGS)
        examples, query = parse_prompt(prompt.text, LANGS)
        assert len(examples) == 1
        assert query == "real"

    def test_malformed_rejected(self):
        with pytest.raises(ArgumentError):
            parse_prompt("garbage without stub", LANGS)


class TestLanguageNames:
    def test_defaults(self):
        assert (LANGS.source_name, LANGS.target_name) == ("Spanish", "English")
        assert (LANGS.source_code, LANGS.target_code) == ("spa_Latn", "eng_Latn")

    def test_empty_name_rejected(self):
        with pytest.raises(ArgumentError):
            LanguageNames(source_name="")


def test_prompt_dump_round_trip(tmp_path):
    prompts = [render_zero_shot("hola", LANGS), render_few_shot("q", [_match("a", "b")], LANGS)]
    path = tmp_path / "prompts.jsonl"
    n = write_prompt_dump(path, [5, 6], prompts, ["hello", "ref"])
    assert n == 2
    records = read_prompt_dump(path)
    assert records[0] == {"id": 5, "prompt": prompts[0].text, "shots": 0, "reference": "hello"}
    assert records[1]["shots"] == 1
