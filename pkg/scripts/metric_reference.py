#!/usr/bin/env python3
"""Independent reference scorers used to pin the metric fixture values.

Deliberately shares no code with the fuzzymt package: BLEU follows the
classic community scorer structure (string n-gram counters, log-space
geometric mean, exponential smoothing), chrF++ follows the per-order
dictionary structure of the original chrF tooling, and TER couples a
greedy shift search with an exhaustive-shift optimum so the frozen value
is independent of greedy tie-breaking on the fixture.

Usage:
    python scripts/metric_reference.py tests/data/metrics_fixture.tsv \
        [--freeze tests/data/metrics_expected.json]
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from collections import Counter, defaultdict

NGRAM_ORDER = 4
CHRF_CHAR_ORDER = 6
CHRF_WORD_ORDER = 2
CHRF_BETA = 2
SHIFT_SIZE_CAP = 10


def tokenize_13a(line: str) -> str:
    norm = line.replace("<skipped>", "")
    norm = norm.replace("-\n", "").replace("\n", " ")
    norm = norm.replace("&quot;", '"').replace("&amp;", "&")
    norm = norm.replace("&lt;", "<").replace("&gt;", ">")
    norm = " {} ".format(norm)
    norm = re.sub(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])", r" \1 ", norm)
    norm = re.sub(r"([^0-9])([\.,])", r"\1 \2 ", norm)
    norm = re.sub(r"([\.,])([^0-9])", r" \1 \2", norm)
    norm = re.sub(r"([0-9])(-)", r"\1 \2 ", norm)
    norm = re.sub(r"\s+", " ", norm)
    return norm.strip()


# -- BLEU (classic scorer structure) ---------------------------------------------


def extract_ngrams(line: str, max_order: int = NGRAM_ORDER) -> Counter:
    ngrams = Counter()
    tokens = line.split()
    for n in range(1, max_order + 1):
        for i in range(len(tokens) - n + 1):
            ngrams[" ".join(tokens[i : i + n])] += 1
    return ngrams


def my_log(num: float) -> float:
    if num == 0.0:
        return -9999999999
    return math.log(num)


def reference_bleu(hyps: list[str], refs: list[str]) -> float:
    correct = [0] * NGRAM_ORDER
    total = [0] * NGRAM_ORDER
    sys_len = 0
    ref_len = 0
    for hyp_raw, ref_raw in zip(hyps, refs):
        hyp, ref = tokenize_13a(hyp_raw), tokenize_13a(ref_raw)
        sys_len += len(hyp.split())
        ref_len += len(ref.split())
        ref_ngrams = extract_ngrams(ref)
        for ngram, count in extract_ngrams(hyp).items():
            n = len(ngram.split())
            correct[n - 1] += min(count, ref_ngrams.get(ngram, 0))
            total[n - 1] += count
    precisions = [0.0] * NGRAM_ORDER
    smooth_mteval = 1.0
    for n in range(1, NGRAM_ORDER + 1):
        if total[n - 1] == 0:
            break
        if correct[n - 1] == 0:
            smooth_mteval *= 2
            precisions[n - 1] = 100.0 / (smooth_mteval * total[n - 1])
        else:
            precisions[n - 1] = 100.0 * correct[n - 1] / total[n - 1]
    if sys_len < ref_len:
        bp = math.exp(1 - ref_len / sys_len) if sys_len > 0 else 0.0
    else:
        bp = 1.0
    return bp * math.exp(sum(map(my_log, precisions)) / NGRAM_ORDER)


# -- chrF++ (per-order dictionary structure) --------------------------------------


def ngram_dicts(items, order: int) -> dict:
    counts = defaultdict(lambda: defaultdict(float))
    for i in range(len(items)):
        for j in range(1, order + 1):
            if i + j <= len(items):
                counts[j - 1][tuple(items[i : i + j])] += 1
    return counts


def reference_chrf_pp(hyps: list[str], refs: list[str]) -> float:
    matching = defaultdict(float)
    hyp_total = defaultdict(float)
    ref_total = defaultdict(float)
    n_orders = CHRF_CHAR_ORDER + CHRF_WORD_ORDER

    def accumulate(hyp_items, ref_items, order: int, base: int) -> None:
        hyp_counts = ngram_dicts(hyp_items, order)
        ref_counts = ngram_dicts(ref_items, order)
        for o in range(order):
            for gram, cnt in hyp_counts[o].items():
                hyp_total[base + o] += cnt
                if gram in ref_counts[o]:
                    matching[base + o] += min(cnt, ref_counts[o][gram])
            for cnt in ref_counts[o].values():
                ref_total[base + o] += cnt

    for hyp, ref in zip(hyps, refs):
        accumulate(list("".join(hyp.split())), list("".join(ref.split())), CHRF_CHAR_ORDER, 0)
        accumulate(hyp.split(), ref.split(), CHRF_WORD_ORDER, CHRF_CHAR_ORDER)

    eps = 1e-16
    factor = CHRF_BETA**2
    total_f = 0.0
    present = 0
    for o in range(n_orders):
        if hyp_total[o] == 0 and ref_total[o] == 0:
            continue
        prec = matching[o] / hyp_total[o] if hyp_total[o] > 0 else eps
        rec = matching[o] / ref_total[o] if ref_total[o] > 0 else eps
        denom = factor * prec + rec
        total_f += (1 + factor) * prec * rec / denom if denom > 0 else eps
        present += 1
    if present == 0:
        return 0.0
    return 100.0 * total_f / present


# -- TER (greedy + exhaustive optimum) ---------------------------------------------


def lev(a: tuple, b: tuple) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    row = list(range(len(b) + 1))
    for i, wa in enumerate(a, 1):
        new_row = [i]
        for j, wb in enumerate(b, 1):
            new_row.append(min(row[j - 1] + (wa != wb), row[j] + 1, new_row[-1] + 1))
        row = new_row
    return row[-1]


def aligned_ok(hyp: tuple, ref: tuple) -> list[bool]:
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
    ok = [False] * n
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i][j] == dp[i - 1][j - 1] + (hyp[i - 1] != ref[j - 1]):
            ok[i - 1] = hyp[i - 1] == ref[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and dp[i][j] == dp[i - 1][j] + 1:
            i -= 1
        else:
            j -= 1
    return ok


def all_moves(hyp: tuple, ref: tuple, require_error: bool) -> list[tuple]:
    ref_spans = set()
    for size in range(1, min(SHIFT_SIZE_CAP, len(ref)) + 1):
        for start in range(len(ref) - size + 1):
            ref_spans.add(ref[start : start + size])
    ok = aligned_ok(hyp, ref) if require_error else [False] * len(hyp)
    moves = []
    for start in range(len(hyp)):
        for size in range(1, min(SHIFT_SIZE_CAP, len(hyp) - start) + 1):
            block = hyp[start : start + size]
            if block not in ref_spans:
                break
            if require_error and all(ok[start : start + size]):
                continue
            rest = hyp[:start] + hyp[start + size :]
            for dest in range(len(rest) + 1):
                if dest == start:
                    continue
                moves.append(rest[:dest] + block + rest[dest:])
    return moves


def greedy_ter_edits(hyp_words: tuple, ref_words: tuple) -> int:
    current = tuple(hyp_words)
    shifts = 0
    while shifts < 50:
        base = lev(current, ref_words)
        if base == 0:
            break
        candidates = all_moves(current, ref_words, require_error=True)
        best = min(candidates, key=lambda c: lev(c, ref_words), default=None)
        if best is None or lev(best, ref_words) >= base:
            break
        current = best
        shifts += 1
    return shifts + lev(current, ref_words)


def exhaustive_ter_edits(hyp_words: tuple, ref_words: tuple) -> int:
    """Minimum (shifts + residual edit distance) over all shift sequences."""
    start = tuple(hyp_words)
    best = lev(start, ref_words)
    frontier = {start}
    seen = {start}
    shifts = 0
    while frontier and shifts + 1 < best:
        shifts += 1
        next_frontier = set()
        for state in frontier:
            for moved in all_moves(state, ref_words, require_error=False):
                if moved in seen:
                    continue
                seen.add(moved)
                next_frontier.add(moved)
                best = min(best, shifts + lev(moved, ref_words))
        frontier = next_frontier
    return best


def reference_ter(hyps: list[str], refs: list[str], check_optimal: bool = True) -> float:
    total_edits = 0
    total_ref = 0
    for hyp, ref in zip(hyps, refs):
        hyp_words = tuple(tokenize_13a(hyp).split())
        ref_words = tuple(tokenize_13a(ref).split())
        greedy = greedy_ter_edits(hyp_words, ref_words)
        if check_optimal:
            optimal = exhaustive_ter_edits(hyp_words, ref_words)
            if greedy != optimal:
                print(
                    f"WARNING greedy {greedy} != optimal {optimal} for: {hyp!r}",
                    file=sys.stderr,
                )
        total_edits += greedy
        total_ref += len(ref_words)
    return 100.0 * total_edits / total_ref


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("fixture", help="TSV with hypothesis<TAB>reference per line")
    parser.add_argument("--freeze", help="write the values to this JSON file")
    parser.add_argument("--skip-optimal-check", action="store_true")
    args = parser.parse_args()

    hyps, refs = [], []
    with open(args.fixture, encoding="utf-8") as fh:
        for line in fh:
            hyp, ref = line.rstrip("\n").split("\t")
            hyps.append(hyp)
            refs.append(ref)

    values = {
        "bleu": reference_bleu(hyps, refs),
        "chrf_pp": reference_chrf_pp(hyps, refs),
        "ter": reference_ter(hyps, refs, check_optimal=not args.skip_optimal_check),
    }
    print(json.dumps(values, indent=2))
    if args.freeze:
        with open(args.freeze, "w", encoding="utf-8") as fh:
            json.dump(values, fh, indent=2)
            fh.write("\n")
        print(f"frozen to {args.freeze}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
