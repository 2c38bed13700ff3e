"""Corpus-level BLEU, chrF++, and TER.

Fixed scorer settings, chosen to match dominant community defaults:

* BLEU: n-gram orders 1..4 pooled over the corpus, geometric mean, brevity
  penalty exp(1 - r/c) for c < r, 13a-style punctuation-splitting
  tokenization, exponential smoothing of zero n-gram precisions.
* chrF++: character n-grams 1..6 (whitespace removed), word n-grams 1..2
  (whitespace tokens), beta = 2, F-scores averaged over the orders present
  in either side of the pooled corpus.
* TER: word edits (insert/delete/substitute, cost 1) plus block shifts
  (cost 1), greedy shift search capped at 50 iterations per segment,
  case-sensitive, 13a-style tokenization, divided by total reference words.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import ArgumentError

BLEU_ORDER = 4
CHRF_CHAR_ORDER = 6
CHRF_WORD_ORDER = 2
CHRF_BETA = 2.0
TER_MAX_SHIFT_ITERS = 50
TER_MAX_SHIFT_SIZE = 10
TER_MAX_SHIFT_DIST = 50

HIGHER_BETTER = "higher-better"
LOWER_BETTER = "lower-better"


@dataclass(frozen=True)
class MetricScore:
    name: str
    value: float
    direction: str


@dataclass(frozen=True)
class EvalPair:
    hypothesis: str
    reference: str


def _require_pairs(pairs: Sequence[EvalPair]) -> None:
    if not pairs:
        raise ArgumentError("metric requires a non-empty corpus")
    for i, pair in enumerate(pairs):
        if not pair.reference:
            raise ArgumentError(f"pair {i}: reference must be non-empty")


# -- tokenization ---------------------------------------------------------------

_13A_RULES = [
    (re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])"), r" \1 "),
    (re.compile(r"([^0-9])([\.,])"), r"\1 \2 "),
    (re.compile(r"([\.,])([^0-9])"), r" \1 \2"),
    (re.compile(r"([0-9])(-)"), r"\1 \2 "),
]


def tokenize_13a(line: str) -> list[str]:
    """Minimal international tokenization: split punctuation from words,
    keeping digit-internal periods/commas attached (WMT '13a' behaviour)."""
    norm = line.replace("<skipped>", "")
    norm = norm.replace("-\n", "").replace("\n", " ")
    norm = (
        norm.replace("&quot;", '"')
        .replace("&amp;", "&")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
    )
    norm = f" {norm} "
    for pattern, repl in _13A_RULES:
        norm = pattern.sub(repl, norm)
    return norm.split()


def _ngram_counts(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# -- BLEU -----------------------------------------------------------------------


def bleu(pairs: Sequence[EvalPair]) -> MetricScore:
    """Corpus BLEU in [0, 100]."""
    _require_pairs(pairs)
    correct = [0] * BLEU_ORDER
    total = [0] * BLEU_ORDER
    hyp_len = 0
    ref_len = 0
    for pair in pairs:
        hyp_toks = tokenize_13a(pair.hypothesis)
        ref_toks = tokenize_13a(pair.reference)
        hyp_len += len(hyp_toks)
        ref_len += len(ref_toks)
        for n in range(1, BLEU_ORDER + 1):
            hyp_ngrams = _ngram_counts(hyp_toks, n)
            ref_ngrams = _ngram_counts(ref_toks, n)
            total[n - 1] += sum(hyp_ngrams.values())
            correct[n - 1] += sum(
                min(count, ref_ngrams[gram]) for gram, count in hyp_ngrams.items()
            )

    if any(t == 0 for t in total):
        return MetricScore("BLEU", 0.0, HIGHER_BETTER)

    smooth = 1.0
    log_sum = 0.0
    for n in range(BLEU_ORDER):
        if correct[n] == 0:
            # exponential smoothing: halve the floor at each empty order
            smooth *= 2.0
            precision = 1.0 / (smooth * total[n])
        else:
            precision = correct[n] / total[n]
        log_sum += math.log(precision)

    if hyp_len == 0:
        return MetricScore("BLEU", 0.0, HIGHER_BETTER)
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    score = 100.0 * brevity * math.exp(log_sum / BLEU_ORDER)
    return MetricScore("BLEU", score, HIGHER_BETTER)


# -- chrF++ ---------------------------------------------------------------------


def _chrf_streams(text: str) -> tuple[str, list[str]]:
    return "".join(text.split()), text.split()


def chrf_pp(pairs: Sequence[EvalPair]) -> MetricScore:
    """Corpus chrF++ in [0, 100]."""
    _require_pairs(pairs)
    n_orders = CHRF_CHAR_ORDER + CHRF_WORD_ORDER
    hyp_totals = [0] * n_orders
    ref_totals = [0] * n_orders
    matches = [0] * n_orders
    for pair in pairs:
        hyp_chars, hyp_words = _chrf_streams(pair.hypothesis)
        ref_chars, ref_words = _chrf_streams(pair.reference)
        for n in range(1, CHRF_CHAR_ORDER + 1):
            hyp_ngrams = _ngram_counts(hyp_chars, n)
            ref_ngrams = _ngram_counts(ref_chars, n)
            hyp_totals[n - 1] += sum(hyp_ngrams.values())
            ref_totals[n - 1] += sum(ref_ngrams.values())
            matches[n - 1] += sum(
                min(count, ref_ngrams[gram]) for gram, count in hyp_ngrams.items()
            )
        for n in range(1, CHRF_WORD_ORDER + 1):
            o = CHRF_CHAR_ORDER + n - 1
            hyp_ngrams = _ngram_counts(hyp_words, n)
            ref_ngrams = _ngram_counts(ref_words, n)
            hyp_totals[o] += sum(hyp_ngrams.values())
            ref_totals[o] += sum(ref_ngrams.values())
            matches[o] += sum(
                min(count, ref_ngrams[gram]) for gram, count in hyp_ngrams.items()
            )

    eps = 1e-16
    beta_sq = CHRF_BETA * CHRF_BETA
    f_sum = 0.0
    present = 0
    for o in range(n_orders):
        if hyp_totals[o] == 0 and ref_totals[o] == 0:
            continue
        precision = matches[o] / hyp_totals[o] if hyp_totals[o] > 0 else eps
        recall = matches[o] / ref_totals[o] if ref_totals[o] > 0 else eps
        denom = beta_sq * precision + recall
        f_sum += ((1 + beta_sq) * precision * recall / denom) if denom > 0 else eps
        present += 1
    if present == 0:
        return MetricScore("chrF++", 0.0, HIGHER_BETTER)
    return MetricScore("chrF++", 100.0 * f_sum / present, HIGHER_BETTER)


# -- TER ------------------------------------------------------------------------


def _edit_distance(hyp: Sequence[str], ref: Sequence[str]) -> int:
    """Word-level Levenshtein with uniform costs."""
    n, m = len(hyp), len(ref)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        hi = hyp[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (hi != ref[j - 1])
            cur[j] = min(sub, prev[j] + 1, cur[j - 1] + 1)
        prev = cur
    return prev[m]


def _misaligned_positions(hyp: Sequence[str], ref: Sequence[str]) -> list[bool]:
    """Per-hypothesis-word error flags from one deterministic DP backtrace."""
    n, m = len(hyp), len(ref)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dp[i][0] = i
    for j in range(m + 1):
        dp[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            dp[i][j] = min(
                dp[i - 1][j - 1] + (hyp[i - 1] != ref[j - 1]),
                dp[i - 1][j] + 1,
                dp[i][j - 1] + 1,
            )
    herr = [True] * n
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i][j] == dp[i - 1][j - 1] + (hyp[i - 1] != ref[j - 1]):
            if hyp[i - 1] == ref[j - 1]:
                herr[i - 1] = False
            i, j = i - 1, j - 1
        elif i > 0 and dp[i][j] == dp[i - 1][j] + 1:
            i -= 1
        else:
            j -= 1
    return herr


def _ref_spans(ref: Sequence[str], max_size: int) -> set[tuple[str, ...]]:
    spans = set()
    for length in range(1, min(max_size, len(ref)) + 1):
        for start in range(len(ref) - length + 1):
            spans.add(tuple(ref[start : start + length]))
    return spans


def _best_shift(hyp: list[str], ref: Sequence[str], base: int) -> tuple[int, list[str] | None]:
    """The single block move that most reduces edit distance, if any."""
    spans = _ref_spans(ref, TER_MAX_SHIFT_SIZE)
    herr = _misaligned_positions(hyp, ref)
    best_gain = 0
    best_hyp = None
    n = len(hyp)
    for start in range(n):
        for length in range(1, min(TER_MAX_SHIFT_SIZE, n - start) + 1):
            block = tuple(hyp[start : start + length])
            if block not in spans:
                # longer blocks only shrink the candidate set
                break
            if not any(herr[start : start + length]):
                continue
            rest = hyp[:start] + hyp[start + length :]
            for dest in range(len(rest) + 1):
                if dest == start:
                    continue
                if abs(dest - start) > TER_MAX_SHIFT_DIST:
                    continue
                moved = rest[:dest] + list(block) + rest[dest:]
                gain = base - _edit_distance(moved, ref)
                if gain > best_gain:
                    best_gain = gain
                    best_hyp = moved
    return best_gain, best_hyp


def ter_segment_edits(hyp_tokens: Sequence[str], ref_tokens: Sequence[str]) -> int:
    """Greedy-shift TER edit count for a single tokenized segment."""
    hyp = list(hyp_tokens)
    shifts = 0
    for _ in range(TER_MAX_SHIFT_ITERS):
        base = _edit_distance(hyp, ref_tokens)
        if base == 0:
            break
        gain, shifted = _best_shift(hyp, ref_tokens, base)
        if shifted is None or gain <= 0:
            break
        hyp = shifted
        shifts += 1
    return shifts + _edit_distance(hyp, ref_tokens)


def ter(pairs: Sequence[EvalPair]) -> MetricScore:
    """Corpus TER: 100 * total edits / total reference words."""
    _require_pairs(pairs)
    total_edits = 0
    total_ref_words = 0
    for pair in pairs:
        hyp_toks = tokenize_13a(pair.hypothesis)
        ref_toks = tokenize_13a(pair.reference)
        total_edits += ter_segment_edits(hyp_toks, ref_toks)
        total_ref_words += len(ref_toks)
    if total_ref_words == 0:
        value = 0.0 if total_edits == 0 else float(total_edits) * 100.0
    else:
        value = 100.0 * total_edits / total_ref_words
    return MetricScore("TER", value, LOWER_BETTER)


def score_all(pairs: Sequence[EvalPair]) -> list[MetricScore]:
    """BLEU, chrF++, and TER for one corpus, in that order."""
    return [bleu(pairs), chrf_pp(pairs), ter(pairs)]
