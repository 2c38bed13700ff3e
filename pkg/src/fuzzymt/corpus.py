"""Parallel corpus ingestion, filtering, deduplication, and splitting.

A corpus is an ordered list of aligned segment pairs. Filtering removes
exact duplicates, empty-sided pairs, and over-length pairs; splitting draws
a seeded validation sample without replacement.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

from .errors import AlignmentError, CorpusEncodingError, SizeError

DEFAULT_MAX_WORDS = 70


@dataclass(frozen=True)
class SegmentPair:
    """One aligned source/target sentence pair."""

    id: int
    source: str
    target: str


@dataclass
class ParallelCorpus:
    """An ordered collection of segment pairs for one language direction."""

    pairs: list[SegmentPair] = field(default_factory=list)
    source_lang: str = "es"
    target_lang: str = "en"

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[SegmentPair]:
        return iter(self.pairs)

    def __getitem__(self, i: int) -> SegmentPair:
        return self.pairs[i]

    def ids(self) -> list[int]:
        return [p.id for p in self.pairs]

    def sources(self) -> list[str]:
        return [p.source for p in self.pairs]

    def targets(self) -> list[str]:
        return [p.target for p in self.pairs]


@dataclass
class DatasetSplit:
    """Disjoint train/validation (and optional test/context) corpora."""

    train: ParallelCorpus
    validation: ParallelCorpus
    test: ParallelCorpus | None = None
    context: ParallelCorpus | None = None


def _read_utf8_lines(path: str | Path) -> list[str]:
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusEncodingError(f"{path} is not valid UTF-8: {exc}") from exc
    if text == "":
        return []
    # a trailing LF terminates the last segment instead of opening an empty one
    if text.endswith("\n"):
        text = text[:-1]
    return text.split("\n")


def load_corpus(
    source_path: str | Path,
    target_path: str | Path | None = None,
    source_lang: str = "es",
    target_lang: str = "en",
) -> ParallelCorpus:
    """Load a corpus from two parallel text files or one 2-column TSV.

    Ids are assigned in file order starting at 0. Raises AlignmentError on a
    line-count mismatch and CorpusEncodingError on invalid UTF-8.
    """
    if target_path is None:
        rows = _read_utf8_lines(source_path)
        pairs = []
        for i, row in enumerate(rows):
            cols = row.split("\t")
            if len(cols) != 2:
                raise AlignmentError(
                    f"{source_path}:{i + 1}: expected 2 tab-separated columns, got {len(cols)}"
                )
            pairs.append(SegmentPair(id=i, source=cols[0], target=cols[1]))
        return ParallelCorpus(pairs, source_lang, target_lang)

    src_lines = _read_utf8_lines(source_path)
    tgt_lines = _read_utf8_lines(target_path)
    if len(src_lines) != len(tgt_lines):
        raise AlignmentError(
            f"line count mismatch: {source_path} has {len(src_lines)} lines, "
            f"{target_path} has {len(tgt_lines)}"
        )
    pairs = [
        SegmentPair(id=i, source=s, target=t)
        for i, (s, t) in enumerate(zip(src_lines, tgt_lines))
    ]
    return ParallelCorpus(pairs, source_lang, target_lang)


def load_corpus_jsonl(path: str | Path, source_lang: str = "es", target_lang: str = "en") -> ParallelCorpus:
    """Load a corpus from JSON-lines records {id, source, target}."""
    pairs = []
    for i, line in enumerate(_read_utf8_lines(path)):
        if not line.strip():
            continue
        obj = json.loads(line)
        pairs.append(SegmentPair(id=int(obj.get("id", i)), source=obj["source"], target=obj["target"]))
    return ParallelCorpus(pairs, source_lang, target_lang)


def word_count(text: str) -> int:
    """Number of maximal non-whitespace runs."""
    return len(text.split())


def filter_corpus(corpus: ParallelCorpus, max_words: int = DEFAULT_MAX_WORDS) -> ParallelCorpus:
    """Drop duplicates, empty-sided pairs, and over-length pairs.

    Duplicates are exact (source, target) string matches after trimming
    trailing whitespace; the first occurrence is kept. A pair is over-length
    when either side has more than ``max_words`` whitespace tokens. Relative
    order is preserved and the operation is idempotent.
    """
    seen: set[tuple[str, str]] = set()
    kept = []
    for pair in corpus.pairs:
        key = (pair.source.rstrip(), pair.target.rstrip())
        if key in seen:
            continue
        if not pair.source.strip() or not pair.target.strip():
            continue
        if word_count(pair.source) > max_words or word_count(pair.target) > max_words:
            continue
        seen.add(key)
        kept.append(pair)
    return replace(corpus, pairs=kept)


def split_corpus(corpus: ParallelCorpus, validation_size: int, seed: int) -> DatasetSplit:
    """Split off a seeded validation sample; the train side is the remainder.

    Both halves keep the original corpus order. Deterministic for a fixed
    (corpus, validation_size, seed).
    """
    n = len(corpus)
    if validation_size < 0:
        raise SizeError(f"validation_size must be >= 0, got {validation_size}")
    if validation_size >= n:
        raise SizeError(f"validation_size {validation_size} must be < corpus size {n}")
    rng = random.Random(seed)
    val_indices = set(rng.sample(range(n), validation_size))
    validation = [corpus.pairs[i] for i in range(n) if i in val_indices]
    train = [corpus.pairs[i] for i in range(n) if i not in val_indices]
    return DatasetSplit(
        train=replace(corpus, pairs=train),
        validation=replace(corpus, pairs=validation),
    )


def write_tsv(corpus: ParallelCorpus, path: str | Path) -> int:
    """Write pairs as a 2-column TSV, one pair per line. Returns the count."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in corpus.pairs:
            fh.write(f"{pair.source}\t{pair.target}\n")
    return len(corpus)


def write_parallel(corpus: ParallelCorpus, source_path: str | Path, target_path: str | Path) -> int:
    """Write pairs as two aligned plain-text files. Returns the count."""
    with open(source_path, "w", encoding="utf-8", newline="\n") as src, open(
        target_path, "w", encoding="utf-8", newline="\n"
    ) as tgt:
        for pair in corpus.pairs:
            src.write(pair.source + "\n")
            tgt.write(pair.target + "\n")
    return len(corpus)


def write_jsonl_corpus(corpus: ParallelCorpus, path: str | Path) -> int:
    """Write pairs as JSON-lines records {id, source, target}. Returns the count."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in corpus.pairs:
            fh.write(
                json.dumps(
                    {"id": pair.id, "source": pair.source, "target": pair.target},
                    ensure_ascii=False,
                )
                + "\n"
            )
    return len(corpus)


def pair_keys(corpus: ParallelCorpus) -> set[tuple[str, str]]:
    """Exact (source, target) keys, trailing whitespace trimmed."""
    return {(p.source.rstrip(), p.target.rstrip()) for p in corpus.pairs}


def load_any(spec: str, source_lang: str = "es", target_lang: str = "en") -> ParallelCorpus:
    """Load a corpus from a path spec.

    ``a.txt,b.txt`` loads two parallel files, ``x.jsonl`` loads JSON lines,
    anything else is read as a 2-column TSV.
    """
    if "," in spec:
        src, tgt = spec.split(",", 1)
        return load_corpus(src.strip(), tgt.strip(), source_lang, target_lang)
    if spec.endswith(".jsonl"):
        return load_corpus_jsonl(spec, source_lang, target_lang)
    return load_corpus(spec, None, source_lang, target_lang)
