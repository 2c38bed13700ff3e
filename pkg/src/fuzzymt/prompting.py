"""Prompt rendering for decoder-only LLMs and encoder-decoder models.

Completion-style translation prompts use labelled lines::

    Spanish: <source>
    English:

with one "<name>: <text>" example pair per shot before the query. The
newline is the stop token, so segment-internal newlines are always
normalized to spaces; the prompt ends exactly at "<target_name>:" with no
trailing whitespace.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import ArgumentError
from .retrieval import FuzzyMatch

_NEWLINE_RUN = re.compile(r"[\r\n]+")


@dataclass(frozen=True)
class LanguageNames:
    source_name: str = "Spanish"
    target_name: str = "English"
    source_code: str = "spa_Latn"
    target_code: str = "eng_Latn"

    def __post_init__(self):
        for label, value in (
            ("source_name", self.source_name),
            ("target_name", self.target_name),
            ("source_code", self.source_code),
            ("target_code", self.target_code),
        ):
            if not value:
                raise ArgumentError(f"{label} must be non-empty")


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    stop_sequence: str = "\n"
    shots: int = 0


@dataclass(frozen=True)
class Seq2SeqInput:
    encoder_text: str
    decoder_prefix: str


def normalize_segment(text: str) -> str:
    """Replace newline runs with single spaces; the stop token must not occur."""
    return _NEWLINE_RUN.sub(" ", text)


def render_zero_shot(source: str, langs: LanguageNames = LanguageNames()) -> RenderedPrompt:
    """"<source_name>: <source>\\n<target_name>:" with zero example pairs."""
    if not source:
        raise ArgumentError("source must be non-empty")
    text = f"{langs.source_name}: {normalize_segment(source)}\n{langs.target_name}:"
    return RenderedPrompt(text=text, shots=0)


def render_few_shot(
    source: str,
    matches: Sequence[FuzzyMatch],
    langs: LanguageNames = LanguageNames(),
) -> RenderedPrompt:
    """Example pairs (ascending score, best match last) followed by the query."""
    if not matches:
        raise ArgumentError("matches must be non-empty; use render_zero_shot instead")
    if not source:
        raise ArgumentError("source must be non-empty")
    ordered = sorted(matches, key=lambda m: m.score)
    lines = []
    for match in ordered:
        lines.append(f"{langs.source_name}: {normalize_segment(match.pair.source)}")
        lines.append(f"{langs.target_name}: {normalize_segment(match.pair.target)}")
    lines.append(f"{langs.source_name}: {normalize_segment(source)}")
    text = "\n".join(lines) + f"\n{langs.target_name}:"
    return RenderedPrompt(text=text, shots=len(ordered))


def render_seq2seq_fuzzy(
    source: str,
    match: FuzzyMatch,
    langs: LanguageNames = LanguageNames(),
    separator_token: str = "•",
) -> Seq2SeqInput:
    """Fuzzy-augmented encoder input plus a teacher-forced target prefix.

    The fuzzy source precedes the new source, joined by the source language
    code and an extra sentence-initial token; the fuzzy target plus the
    target language code and the same token form the forced decoder prefix.
    """
    if match is None:
        raise ArgumentError("a fuzzy match is required")
    if not separator_token:
        raise ArgumentError("separator_token must be non-empty")
    fuzzy_source = normalize_segment(match.pair.source)
    fuzzy_target = normalize_segment(match.pair.target)
    encoder_text = f"{fuzzy_source} {langs.source_code} {separator_token} {normalize_segment(source)}"
    decoder_prefix = f"{fuzzy_target} {langs.target_code} {separator_token}"
    return Seq2SeqInput(encoder_text=encoder_text, decoder_prefix=decoder_prefix)


def parse_prompt(text: str, langs: LanguageNames = LanguageNames()) -> tuple[list[tuple[str, str]], str]:
    """Split a rendered prompt back into its example pairs and the query.

    Returns (examples, query_source). Raises ArgumentError when the text does
    not follow the rendered line structure.
    """
    src_prefix = f"{langs.source_name}: "
    tgt_prefix = f"{langs.target_name}: "
    lines = text.split("\n")
    if not lines or lines[-1] != f"{langs.target_name}:":
        raise ArgumentError("prompt must end with the bare target stub line")
    body = lines[:-1]
    if not body or len(body) % 2 == 0:
        raise ArgumentError("prompt body must hold N example pairs plus one query line")
    examples = []
    for i in range(0, len(body) - 1, 2):
        src_line, tgt_line = body[i], body[i + 1]
        if not src_line.startswith(src_prefix) or not tgt_line.startswith(tgt_prefix):
            raise ArgumentError(f"malformed example pair at lines {i}/{i + 1}")
        examples.append((src_line[len(src_prefix):], tgt_line[len(tgt_prefix):]))
    query_line = body[-1]
    if not query_line.startswith(src_prefix):
        raise ArgumentError("query line must carry the source-language prefix")
    return examples, query_line[len(src_prefix):]


def write_prompt_dump(
    path: str | Path,
    ids: Sequence[int],
    prompts: Sequence[RenderedPrompt],
    references: Sequence[str],
) -> int:
    """Write one JSONL record {id, prompt, shots, reference} per prompt."""
    if not (len(ids) == len(prompts) == len(references)):
        raise ArgumentError("ids, prompts, and references must have equal lengths")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pid, prompt, ref in zip(ids, prompts, references):
            fh.write(
                json.dumps(
                    {"id": pid, "prompt": prompt.text, "shots": prompt.shots, "reference": ref},
                    ensure_ascii=False,
                )
                + "\n"
            )
    return len(ids)


def read_prompt_dump(path: str | Path) -> list[dict]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records
