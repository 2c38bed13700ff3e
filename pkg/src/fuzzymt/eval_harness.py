"""End-to-end experiment orchestration and report rendering.

Runs zero-shot / one-shot translation conditions over a test corpus against
a completion endpoint, scores the generations, and renders a comparison
table. Every stage persists its artifacts under the output directory so
scoring can be re-run without re-translating.
"""

from __future__ import annotations

import hashlib
import json
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import corpus as corpus_mod
from . import llm_client, retrieval
from .ann_index import IvfConfig
from .corpus import ParallelCorpus, pair_keys
from .embedding import EmbeddingProviderConfig
from .errors import DataError, FuzzyMtError, LeakageError, ValidationError
from .llm_client import DecodingParams, TranslationResult
from .mt_metrics import EvalPair, MetricScore, score_all
from .prompting import LanguageNames, RenderedPrompt, render_few_shot, render_zero_shot, write_prompt_dump

CONDITION_ZERO = "zero-shot"
CONDITION_ONE = "one-shot"
CONDITION_ORDER = (CONDITION_ZERO, CONDITION_ONE)

CONTEXT_LABELS = {
    CONDITION_ZERO: "Source only (zero-shot)",
    CONDITION_ONE: "+ Fuzzy (one-shot)",
}

REPORT_COLUMNS = ("Model", "Context", "BLEU ↑", "chrF++ ↑", "TER ↓")


@dataclass
class ExperimentConfig:
    test_corpus: str
    context_corpus: str
    provider: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    ivf: IvfConfig | None = None
    endpoint: str = "http://127.0.0.1:8000"
    decoding: DecodingParams = field(default_factory=DecodingParams)
    conditions: list[str] = field(default_factory=lambda: [CONDITION_ZERO, CONDITION_ONE])
    output_dir: str = "runs/experiment"
    seed: int = 0
    model_name: str = "default"
    batch_size: int = llm_client.DEFAULT_BATCH_SIZE
    token_multiplier: int = llm_client.DEFAULT_TOKEN_MULTIPLIER
    max_concurrent_batches: int = 2
    allow_context_overlap: bool = False
    langs: LanguageNames = field(default_factory=LanguageNames)

    def __post_init__(self):
        if not self.conditions:
            raise ValidationError("conditions must be non-empty")
        for cond in self.conditions:
            if cond not in CONDITION_ORDER:
                raise ValidationError(f"unknown condition {cond!r}")


@dataclass
class ConditionResult:
    condition: str
    translations: list[TranslationResult]
    scores: list[MetricScore]
    segments_per_second: float


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """Build an ExperimentConfig from a JSON file."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"{path}: unknown config keys {sorted(unknown)}")
    kwargs = dict(raw)
    if "provider" in kwargs:
        kwargs["provider"] = EmbeddingProviderConfig(**kwargs["provider"])
    if kwargs.get("ivf") is not None:
        kwargs["ivf"] = IvfConfig(**kwargs["ivf"])
    if "decoding" in kwargs:
        kwargs["decoding"] = DecodingParams(**kwargs["decoding"])
    if "langs" in kwargs:
        kwargs["langs"] = LanguageNames(**kwargs["langs"])
    return ExperimentConfig(**kwargs)


def config_digest(cfg: ExperimentConfig) -> str:
    def default(obj):
        return asdict(obj) if hasattr(obj, "__dataclass_fields__") else str(obj)

    canonical = json.dumps(asdict(cfg), sort_keys=True, default=default)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@contextmanager
def _stage(label: str):
    """Re-raise pipeline and file errors with the failing stage named."""
    try:
        yield
    except FuzzyMtError as exc:
        exc.args = (f"[{label}] {exc}",) + exc.args[1:]
        raise
    except OSError as exc:
        raise DataError(f"[{label}] {exc}") from exc


def check_no_leakage(test: ParallelCorpus, context: ParallelCorpus) -> None:
    """Error when any exact test pair also appears in the context corpus."""
    overlap = pair_keys(test) & pair_keys(context)
    if overlap:
        offending = [p.id for p in test.pairs if (p.source.rstrip(), p.target.rstrip()) in overlap]
        raise LeakageError(
            f"{len(offending)} test pairs present in the context corpus (ids {offending[:10]}"
            + ("..." if len(offending) > 10 else "")
            + ")",
            offending_ids=offending,
        )


def _condition_prompts(
    condition: str,
    test: ParallelCorpus,
    matches_by_id: dict[int, list],
    langs: LanguageNames,
) -> list[RenderedPrompt]:
    prompts = []
    for pair in test.pairs:
        if condition == CONDITION_ZERO:
            prompts.append(render_zero_shot(pair.source, langs))
        else:
            prompts.append(render_few_shot(pair.source, matches_by_id[pair.id], langs))
    return prompts


def run_experiment(cfg: ExperimentConfig) -> list[ConditionResult]:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started_at = datetime.now(timezone.utc).isoformat()

    with _stage("load-test-corpus"):
        test = corpus_mod.load_any(cfg.test_corpus)
    with _stage("load-context-corpus"):
        context = corpus_mod.load_any(cfg.context_corpus)
    if not cfg.allow_context_overlap:
        with _stage("leakage-check"):
            check_no_leakage(test, context)

    ivf = cfg.ivf if cfg.ivf is not None else IvfConfig(dim=cfg.provider.dim)
    with _stage("build-context-store"):
        store = retrieval.build_context_store(context, cfg.provider, ivf)

    matches_by_id: dict[int, list] = {}
    if CONDITION_ONE in cfg.conditions:
        with _stage("retrieve"):
            match_lists = retrieval.retrieve_fuzzy_many(store, test.sources(), k=1)
            matches_by_id = dict(zip(test.ids(), match_lists))
            retrieval.write_retrieval_dump(
                out_dir / "retrieval.jsonl", test.ids(), match_lists
            )

    results: list[ConditionResult] = []
    for condition in CONDITION_ORDER:
        if condition not in cfg.conditions:
            continue
        with _stage(f"prompts-{condition}"):
            prompts = _condition_prompts(condition, test, matches_by_id, cfg.langs)
            write_prompt_dump(
                out_dir / f"prompts.{condition}.jsonl", test.ids(), prompts, test.targets()
            )
        with _stage(f"translate-{condition}"):
            batches = llm_client.make_batches(
                prompts,
                test.sources(),
                batch_size=cfg.batch_size,
                token_multiplier=cfg.token_multiplier,
                params=cfg.decoding,
                ids=test.ids(),
            )
            t0 = time.monotonic()
            translations = llm_client.translate_all(
                batches,
                cfg.endpoint,
                model=cfg.model_name,
                max_concurrent_batches=cfg.max_concurrent_batches,
                trace_path=out_dir / f"trace.{condition}.jsonl",
            )
            elapsed = max(time.monotonic() - t0, 1e-9)
            with open(
                out_dir / f"generations.{condition}.jsonl", "w", encoding="utf-8", newline="\n"
            ) as fh:
                for result in translations:
                    fh.write(
                        json.dumps(
                            {"id": result.id, "text": result.text, "latency_ms": result.latency_ms},
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
        with _stage(f"score-{condition}"):
            pairs = [
                EvalPair(hypothesis=r.text, reference=t)
                for r, t in zip(translations, test.targets())
            ]
            scores = score_all(pairs)
        results.append(
            ConditionResult(
                condition=condition,
                translations=translations,
                scores=scores,
                segments_per_second=len(test) / elapsed,
            )
        )

    with _stage("report"):
        for fmt, suffix in (("markdown", "md"), ("tsv", "tsv"), ("json", "json")):
            (out_dir / f"report.{suffix}").write_text(
                render_report(results, fmt, model_name=cfg.model_name), encoding="utf-8"
            )
        meta = {
            "schema_version": 1,
            "config_sha256": config_digest(cfg),
            "seed": cfg.seed,
            "started_at": started_at,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "conditions": [r.condition for r in results],
            "test_segments": len(test),
            "context_segments": len(context),
            "segments_per_second": {
                r.condition: r.segments_per_second for r in results
            },
        }
        (out_dir / "run_meta.json").write_text(
            json.dumps(meta, indent=2) + "\n", encoding="utf-8"
        )
    return results


def rescore_condition(output_dir: str | Path, condition: str) -> list[MetricScore]:
    """Recompute scores for one condition from persisted artifacts only."""
    out_dir = Path(output_dir)
    refs = {}
    for line in (out_dir / f"prompts.{condition}.jsonl").read_text(encoding="utf-8").splitlines():
        if line.strip():
            obj = json.loads(line)
            refs[obj["id"]] = obj["reference"]
    pairs = []
    for line in (out_dir / f"generations.{condition}.jsonl").read_text(encoding="utf-8").splitlines():
        if line.strip():
            obj = json.loads(line)
            pairs.append(EvalPair(hypothesis=obj["text"], reference=refs[obj["id"]]))
    return score_all(pairs)


# -- report rendering ------------------------------------------------------------


def _result_row(result: ConditionResult, model_name: str) -> dict:
    # throughput stays out of the report rows so reruns are byte-identical
    by_name = {s.name: s.value for s in result.scores}
    return {
        "model": model_name,
        "context": CONTEXT_LABELS[result.condition],
        "bleu": by_name["BLEU"],
        "chrf_pp": by_name["chrF++"],
        "ter": by_name["TER"],
    }


def _rows_to_markdown(rows: list[dict]) -> str:
    header = "| " + " | ".join(REPORT_COLUMNS) + " |"
    rule = "|" + "|".join(" --- " for _ in REPORT_COLUMNS) + "|"
    lines = [header, rule]
    for row in rows:
        lines.append(
            "| {model} | {context} | {bleu:.2f} | {chrf:.2f} | {ter:.2f} |".format(
                model=row["model"],
                context=row["context"],
                bleu=row["bleu"],
                chrf=row["chrf_pp"],
                ter=row["ter"],
            )
        )
    return "\n".join(lines) + "\n"


def _rows_to_tsv(rows: list[dict]) -> str:
    lines = ["\t".join(REPORT_COLUMNS)]
    for row in rows:
        lines.append(
            "\t".join(
                [
                    row["model"],
                    row["context"],
                    f"{row['bleu']:.2f}",
                    f"{row['chrf_pp']:.2f}",
                    f"{row['ter']:.2f}",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def render_report(
    results: list[ConditionResult], format: str = "markdown", model_name: str = "default"
) -> str:
    """Table-style comparison; zero-shot rows precede one-shot rows."""
    if not results:
        raise ValidationError("render_report requires at least one condition result")
    ordered = sorted(results, key=lambda r: CONDITION_ORDER.index(r.condition))
    rows = [_result_row(r, model_name) for r in ordered]
    if format == "json":
        return json.dumps({"columns": list(REPORT_COLUMNS), "rows": rows}, indent=2) + "\n"
    if format == "markdown":
        return _rows_to_markdown(rows)
    if format == "tsv":
        return _rows_to_tsv(rows)
    raise ValidationError(f"unknown report format {format!r}")


def report_json_to_table(json_text: str, format: str = "markdown") -> str:
    """Re-render a JSON report as a markdown or TSV table."""
    payload = json.loads(json_text)
    rows = payload["rows"]
    if format == "markdown":
        return _rows_to_markdown(rows)
    if format == "tsv":
        return _rows_to_tsv(rows)
    raise ValidationError(f"unknown report format {format!r}")
