"""Command-line entry point: one subcommand per pipeline stage.

Machine-readable output goes to stdout, logs and warnings to stderr.
Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 transport
error. Defaults mirror the reference experiment configuration (max-words 70,
dim 384, nlist 4096, nprobe 32, batch 20, token multiplier 4, temperature
0.3, top_p 1, mix 20000 at ratio 0.5, validation 1000).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import ann_index, corpus, embedding, eval_harness, finetune_export, llm_client, mt_metrics, prompting, retrieval
from .errors import (
    ContractViolationError,
    DataError,
    FuzzyMtError,
    ProviderError,
    TransportError,
    UsageError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRANSPORT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _print(obj) -> None:
    sys.stdout.write(json.dumps(obj, ensure_ascii=False) + "\n")


def _log(message: str) -> None:
    sys.stderr.write(message + "\n")


def _load_corpus_arg(spec: str) -> corpus.ParallelCorpus:
    if spec == "-":
        pairs = []
        for i, line in enumerate(sys.stdin.read().splitlines()):
            cols = line.split("\t")
            if len(cols) != 2:
                raise DataError(f"stdin:{i + 1}: expected 2 tab-separated columns")
            pairs.append(corpus.SegmentPair(id=i, source=cols[0], target=cols[1]))
        return corpus.ParallelCorpus(pairs)
    return corpus.load_any(spec)


def _write_corpus(c: corpus.ParallelCorpus, out: str | None) -> None:
    if out is None:
        for pair in c.pairs:
            sys.stdout.write(f"{pair.source}\t{pair.target}\n")
    elif out.endswith(".jsonl"):
        corpus.write_jsonl_corpus(c, out)
    else:
        corpus.write_tsv(c, out)


def _provider_from_args(args) -> embedding.EmbeddingProviderConfig:
    return embedding.EmbeddingProviderConfig(
        kind=args.provider,
        endpoint=getattr(args, "endpoint", "") or "",
        model_name=getattr(args, "model", "deterministic-ngram"),
        dim=args.dim,
        batch_size=getattr(args, "embed_batch_size", 64),
        normalize=not getattr(args, "no_normalize", False),
        seed=args.seed,
    )


def _langs_from_args(args) -> prompting.LanguageNames:
    return prompting.LanguageNames(
        source_name=args.source_name,
        target_name=args.target_name,
        source_code=args.source_code,
        target_code=args.target_code,
    )


def _add_provider_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider", default="deterministic-test",
                   choices=["deterministic-test", "remote-http"], help="embedding provider kind")
    p.add_argument("--endpoint", default="", help="embedding endpoint URL (remote provider)")
    p.add_argument("--model", default="deterministic-ngram", help="embedding model name")
    p.add_argument("--dim", type=int, default=embedding.DEFAULT_DIM, help="embedding dimension")
    p.add_argument("--embed-batch-size", type=int, default=64)
    p.add_argument("--no-normalize", action="store_true", help="skip L2 normalization")


def _add_ivf_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nlist", type=int, default=4096, help="number of coarse clusters")
    p.add_argument("--nprobe", type=int, default=32, help="clusters searched per query")
    p.add_argument("--metric", default=ann_index.METRIC_COSINE,
                   choices=[ann_index.METRIC_COSINE, ann_index.METRIC_L2])
    p.add_argument("--kmeans-iters", type=int, default=25)


def _add_lang_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--source-name", default="Spanish")
    p.add_argument("--target-name", default="English")
    p.add_argument("--source-code", default="spa_Latn")
    p.add_argument("--target-code", default="eng_Latn")


def _ivf_from_args(args, size: int) -> ann_index.IvfConfig:
    nlist = min(args.nlist, size) if getattr(args, "fit_nlist", False) else args.nlist
    return ann_index.IvfConfig(
        dim=args.dim,
        nlist=nlist,
        nprobe=min(args.nprobe, nlist),
        metric=args.metric,
        kmeans_iters=args.kmeans_iters,
        seed=args.seed,
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="fuzzymt", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    common.add_argument("--config", default=None, help="JSON file of flag defaults")
    common.add_argument("--out", "--output", dest="out", default=None, help="output path")

    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("filter", parents=[common], help="dedup + length-filter a corpus")
    p.add_argument("--in", dest="inp", required=True, help="src.txt,tgt.txt | corpus.tsv | corpus.jsonl | -")
    p.add_argument("--max-words", type=int, default=corpus.DEFAULT_MAX_WORDS)

    p = sub.add_parser("split", parents=[common], help="seeded train/validation split")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--validation-size", type=int, default=1000)
    p.add_argument("--validation-out", default=None)

    p = sub.add_parser("embed", parents=[common], help="embed corpus sources into a cache file")
    p.add_argument("--in", dest="inp", required=True)
    _add_provider_flags(p)

    p = sub.add_parser("index-build", parents=[common], help="train+populate an IVF index")
    p.add_argument("--in", dest="inp", required=True, help="embedding cache file")
    _add_ivf_flags(p)
    p.add_argument("--dim", type=int, default=None, help="override dimension check")

    p = sub.add_parser("index-search", parents=[common], help="query a saved index")
    p.add_argument("--index", required=True)
    p.add_argument("--query", default=None, help="single query text")
    p.add_argument("--queries", default=None, help="file with one query per line")
    p.add_argument("-k", type=int, default=1)
    p.add_argument("--nprobe", type=int, default=None)
    _add_provider_flags(p)

    p = sub.add_parser("retrieve", parents=[common], help="fuzzy-match lookup against a context corpus")
    p.add_argument("--in", dest="inp", required=True, help="query corpus")
    p.add_argument("--context", required=True, help="context corpus")
    p.add_argument("-k", type=int, default=1)
    p.add_argument("--fit-nlist", action="store_true",
                   help="clamp nlist to the context size (small corpora)")
    _add_provider_flags(p)
    _add_ivf_flags(p)

    p = sub.add_parser("prompts", parents=[common], help="render a prompt dump for a test corpus")
    p.add_argument("--in", dest="inp", required=True, help="test corpus")
    p.add_argument("--condition", default="zero-shot",
                   choices=[eval_harness.CONDITION_ZERO, eval_harness.CONDITION_ONE])
    p.add_argument("--context", default=None, help="context corpus (one-shot)")
    p.add_argument("--fit-nlist", action="store_true")
    _add_provider_flags(p)
    _add_ivf_flags(p)
    _add_lang_flags(p)

    p = sub.add_parser("export-dataset", parents=[common], help="build the fine-tuning JSONL mix")
    p.add_argument("--in", dest="inp", required=True, help="training corpus")
    p.add_argument("--context", default=None, help="context corpus for one-shot retrieval")
    p.add_argument("--total", type=int, default=20000)
    p.add_argument("--ratio", type=float, default=0.5, help="one-shot fraction")
    p.add_argument("--validation-size", type=int, default=1000)
    p.add_argument("--fit-nlist", action="store_true")
    _add_provider_flags(p)
    _add_ivf_flags(p)
    _add_lang_flags(p)

    p = sub.add_parser("manifest", parents=[common], help="emit the training manifest JSON")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--train-batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=2e-3)
    p.add_argument("--warmup-ratio", type=float, default=0.03)
    p.add_argument("--lora-r", type=int, default=64)
    p.add_argument("--lora-alpha", type=int, default=16)
    p.add_argument("--lora-dropout", type=float, default=0.1)

    p = sub.add_parser("translate", parents=[common], help="drive a completion endpoint over a prompt dump")
    p.add_argument("--in", dest="inp", required=True, help="prompt dump JSONL")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--model", default="default")
    p.add_argument("--batch-size", type=int, default=llm_client.DEFAULT_BATCH_SIZE)
    p.add_argument("--token-multiplier", type=int, default=llm_client.DEFAULT_TOKEN_MULTIPLIER)
    p.add_argument("--mode", default=llm_client.MODE_GREEDY,
                   choices=[llm_client.MODE_GREEDY, llm_client.MODE_SAMPLED])
    p.add_argument("--temperature", type=float, default=0.3)
    p.add_argument("--top-p", type=float, default=1.0)
    p.add_argument("--max-concurrent-batches", type=int, default=2)
    p.add_argument("--trace", default=None, help="JSONL request/response trace file")
    _add_lang_flags(p)

    p = sub.add_parser("evaluate", parents=[common], help="score hypotheses with BLEU/chrF++/TER")
    p.add_argument("--in", dest="inp", default=None, help="JSONL with {id, hypothesis, reference}")
    p.add_argument("--hyp", default=None, help="hypothesis text file")
    p.add_argument("--ref", default=None, help="reference text file")

    p = sub.add_parser("report", parents=[common], help="re-render a JSON report as a table")
    p.add_argument("--in", dest="inp", required=True, help="report.json path")
    p.add_argument("--format", default="markdown", choices=["markdown", "tsv"])

    p = sub.add_parser("run", parents=[common], help="run the full experiment from a config file")

    return parser


# -- subcommand bodies -----------------------------------------------------------


def _cmd_filter(args) -> int:
    c = _load_corpus_arg(args.inp)
    filtered = corpus.filter_corpus(c, max_words=args.max_words)
    _write_corpus(filtered, args.out)
    summary = {"kept": len(filtered), "dropped": len(c) - len(filtered)}
    if args.out is None:
        _log(json.dumps(summary))
    else:
        _print({**summary, "out": args.out})
    return EXIT_OK


def _cmd_split(args) -> int:
    c = _load_corpus_arg(args.inp)
    split = corpus.split_corpus(c, args.validation_size, args.seed)
    if args.out is None:
        validation_out = args.validation_out
        if validation_out is None:
            raise UsageError("split needs --out PREFIX or --validation-out PATH")
        _write_corpus(split.validation, validation_out)
        _write_corpus(split.train, None)
        _log(json.dumps({"train": len(split.train), "validation": len(split.validation)}))
    else:
        train_path = f"{args.out}.train.tsv"
        validation_path = f"{args.out}.validation.tsv"
        corpus.write_tsv(split.train, train_path)
        corpus.write_tsv(split.validation, validation_path)
        _print(
            {
                "train": len(split.train),
                "validation": len(split.validation),
                "train_path": train_path,
                "validation_path": validation_path,
            }
        )
    return EXIT_OK


def _read_texts(spec: str) -> tuple[list[int], list[str]]:
    if spec.endswith((".tsv", ".jsonl")) or "," in spec:
        c = corpus.load_any(spec)
        return c.ids(), c.sources()
    lines = Path(spec).read_text(encoding="utf-8").splitlines()
    return list(range(len(lines))), lines


def _cmd_embed(args) -> int:
    if args.out is None:
        raise UsageError("embed requires --out for the binary cache file")
    ids, texts = _read_texts(args.inp)
    cfg = _provider_from_args(args)
    vectors = embedding.embed_batch(texts, cfg)
    embedding.write_embedding_cache(args.out, vectors, texts, ids=ids)
    _print({"count": len(texts), "dim": cfg.dim, "out": args.out})
    return EXIT_OK


def _cmd_index_build(args) -> int:
    if args.out is None:
        raise UsageError("index-build requires --out for the index file")
    matrix, sidecar = embedding.read_embedding_cache(args.inp)
    dim = args.dim or matrix.shape[1]
    cfg = ann_index.IvfConfig(
        dim=dim,
        nlist=args.nlist,
        nprobe=args.nprobe,
        metric=args.metric,
        kmeans_iters=args.kmeans_iters,
        seed=args.seed,
    )
    index = ann_index.train(matrix, cfg)
    ids = sidecar.get("ids", list(range(matrix.shape[0])))
    index.add(zip(ids, matrix))
    index.save(args.out)
    _print({"size": index.size, "nlist": cfg.nlist, "dim": dim, "out": args.out})
    return EXIT_OK


def _cmd_index_search(args) -> int:
    index = ann_index.IvfIndex.load(args.index, nprobe=args.nprobe)
    if args.query is not None:
        queries = [args.query]
    elif args.queries is not None:
        queries = Path(args.queries).read_text(encoding="utf-8").splitlines()
    else:
        raise UsageError("index-search needs --query or --queries")
    cfg = _provider_from_args(args)
    cfg.dim = index.config.dim
    vectors = embedding.embed_batch(queries, cfg)
    for i, vec in enumerate(vectors):
        hits = index.search(vec, args.k, nprobe_override=args.nprobe)
        _print({"query_index": i, "hits": [{"id": h.id, "score": h.score} for h in hits]})
    return EXIT_OK


def _build_store(args, context_spec: str) -> retrieval.ContextStore:
    context = corpus.load_any(context_spec)
    provider = _provider_from_args(args)
    ivf = _ivf_from_args(args, len(context))
    return retrieval.build_context_store(context, provider, ivf)


def _cmd_retrieve(args) -> int:
    store = _build_store(args, args.context)
    query_corpus = _load_corpus_arg(args.inp)
    match_lists = retrieval.retrieve_fuzzy_many(store, query_corpus.sources(), k=args.k)
    if args.out is not None:
        n = retrieval.write_retrieval_dump(args.out, query_corpus.ids(), match_lists)
        _print({"queries": n, "out": args.out})
    else:
        for qid, matches in zip(query_corpus.ids(), match_lists):
            _print(
                {
                    "query_id": qid,
                    "matches": [
                        {
                            "context_id": m.pair.id,
                            "score": m.score,
                            "source": m.pair.source,
                            "target": m.pair.target,
                        }
                        for m in matches
                    ],
                }
            )
    return EXIT_OK


def _cmd_prompts(args) -> int:
    test = _load_corpus_arg(args.inp)
    langs = _langs_from_args(args)
    if args.condition == eval_harness.CONDITION_ONE:
        if args.context is None:
            raise UsageError("one-shot prompts need --context")
        store = _build_store(args, args.context)
        match_lists = retrieval.retrieve_fuzzy_many(store, test.sources(), k=1)
        prompts = [
            prompting.render_few_shot(pair.source, matches, langs)
            for pair, matches in zip(test.pairs, match_lists)
        ]
    else:
        prompts = [prompting.render_zero_shot(pair.source, langs) for pair in test.pairs]
    if args.out is not None:
        n = prompting.write_prompt_dump(args.out, test.ids(), prompts, test.targets())
        _print({"prompts": n, "shots": prompts[0].shots if prompts else 0, "out": args.out})
    else:
        for pid, prompt, ref in zip(test.ids(), prompts, test.targets()):
            _print({"id": pid, "prompt": prompt.text, "shots": prompt.shots, "reference": ref})
    return EXIT_OK


def _cmd_export_dataset(args) -> int:
    if args.out is None:
        raise UsageError("export-dataset requires --out PREFIX")
    train_corpus = _load_corpus_arg(args.inp)
    mix = finetune_export.MixSpec(
        total=args.total,
        one_shot_ratio=args.ratio,
        validation_size=args.validation_size,
        seed=args.seed,
    )
    store = None
    if args.ratio > 0:
        if args.context is None:
            raise UsageError("export-dataset with --ratio > 0 needs --context")
        store = _build_store(args, args.context)
    langs = _langs_from_args(args)
    train, validation = finetune_export.build_finetune_dataset(train_corpus, store, mix, langs)
    train_path = f"{args.out}.train.jsonl"
    validation_path = f"{args.out}.validation.jsonl"
    finetune_export.write_jsonl(train, train_path)
    finetune_export.write_jsonl(validation, validation_path)
    _print(
        {
            "train": len(train),
            "validation": len(validation),
            "one_shot": sum(1 for e in train + validation if e.shot_type == finetune_export.SHOT_ONE),
            "zero_shot": sum(1 for e in train + validation if e.shot_type == finetune_export.SHOT_ZERO),
            "train_path": train_path,
            "validation_path": validation_path,
        }
    )
    return EXIT_OK


def _cmd_manifest(args) -> int:
    manifest = finetune_export.TrainingManifest()
    manifest.training.epochs = args.epochs
    manifest.training.batch_size = args.train_batch_size
    manifest.training.learning_rate = args.learning_rate
    manifest.training.warmup_ratio = args.warmup_ratio
    manifest.lora.r = args.lora_r
    manifest.lora.alpha = args.lora_alpha
    manifest.lora.dropout = args.lora_dropout
    if args.out is None:
        manifest.validate()
        _print({"schema_version": finetune_export.SCHEMA_VERSION, **asdict(manifest)})
    else:
        finetune_export.emit_training_manifest(manifest, args.out)
        _print({"out": args.out})
    return EXIT_OK


def _cmd_translate(args) -> int:
    records = prompting.read_prompt_dump(args.inp)
    langs = _langs_from_args(args)
    prompts = [
        prompting.RenderedPrompt(text=r["prompt"], shots=r.get("shots", 0)) for r in records
    ]
    sources = [prompting.parse_prompt(r["prompt"], langs)[1] for r in records]
    ids = [r["id"] for r in records]
    params = llm_client.DecodingParams(
        mode=args.mode, temperature=args.temperature, top_p=args.top_p
    )
    batches = llm_client.make_batches(
        prompts,
        sources,
        batch_size=args.batch_size,
        token_multiplier=args.token_multiplier,
        params=params,
        ids=ids,
    )
    results = llm_client.translate_all(
        batches,
        args.endpoint,
        model=args.model,
        max_concurrent_batches=args.max_concurrent_batches,
        trace_path=args.trace,
    )
    lines = [
        {"id": r.id, "text": r.text, "latency_ms": r.latency_ms} for r in results
    ]
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(json.dumps(line, ensure_ascii=False) + "\n")
        _print({"translations": len(lines), "out": args.out})
    else:
        for line in lines:
            _print(line)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    pairs = []
    if args.inp is not None:
        for line in Path(args.inp).read_text(encoding="utf-8").splitlines():
            if line.strip():
                obj = json.loads(line)
                pairs.append(
                    mt_metrics.EvalPair(hypothesis=obj["hypothesis"], reference=obj["reference"])
                )
    elif args.hyp is not None and args.ref is not None:
        hyp_lines = Path(args.hyp).read_text(encoding="utf-8").splitlines()
        ref_lines = Path(args.ref).read_text(encoding="utf-8").splitlines()
        if len(hyp_lines) != len(ref_lines):
            raise DataError(
                f"hypothesis file has {len(hyp_lines)} lines, reference {len(ref_lines)}"
            )
        pairs = [mt_metrics.EvalPair(h, r) for h, r in zip(hyp_lines, ref_lines)]
    else:
        raise UsageError("evaluate needs --in JSONL or --hyp and --ref")
    scores = mt_metrics.score_all(pairs)
    payload = {"bleu": scores[0].value, "chrf_pp": scores[1].value, "ter": scores[2].value}
    if args.out is not None:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    _print(payload)
    return EXIT_OK


def _cmd_report(args) -> int:
    table = eval_harness.report_json_to_table(
        Path(args.inp).read_text(encoding="utf-8"), args.format
    )
    if args.out is not None:
        Path(args.out).write_text(table, encoding="utf-8")
        _print({"out": args.out})
    else:
        sys.stdout.write(table)
    return EXIT_OK


def _cmd_run(args) -> int:
    if args.config is None:
        raise UsageError("run requires --config experiment.json")
    cfg = eval_harness.load_experiment_config(args.config)
    if args.out is not None:
        cfg.output_dir = args.out
    results = eval_harness.run_experiment(cfg)
    sys.stdout.write(eval_harness.render_report(results, "json", model_name=cfg.model_name))
    return EXIT_OK


_COMMANDS = {
    "filter": _cmd_filter,
    "split": _cmd_split,
    "embed": _cmd_embed,
    "index-build": _cmd_index_build,
    "index-search": _cmd_index_search,
    "retrieve": _cmd_retrieve,
    "prompts": _cmd_prompts,
    "export-dataset": _cmd_export_dataset,
    "manifest": _cmd_manifest,
    "translate": _cmd_translate,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
    "run": _cmd_run,
}


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    # apply --config values as flag defaults before the real parse
    if "--config" in argv:
        cfg_path = argv[argv.index("--config") + 1] if argv.index("--config") + 1 < len(argv) else None
        if cfg_path and Path(cfg_path).exists() and len(argv) > 0 and argv[0] != "run":
            try:
                defaults = json.loads(Path(cfg_path).read_text(encoding="utf-8"))
                if isinstance(defaults, dict):
                    flat = {k.replace("-", "_"): v for k, v in defaults.items() if not isinstance(v, (dict, list))}
                    parser.set_defaults(**flat)
            except ValueError as exc:
                raise DataError(f"{cfg_path}: invalid JSON config: {exc}") from exc
    args = parser.parse_args(argv)
    return _COMMANDS[args.subcommand](args)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        return dispatch(argv)
    except UsageError as exc:
        _log(f"usage error: {exc}")
        return EXIT_USAGE
    except (TransportError, ProviderError, ContractViolationError) as exc:
        _log(f"transport error: {exc}")
        return EXIT_TRANSPORT
    except FuzzyMtError as exc:
        _log(f"error: {exc}")
        return EXIT_DATA
    except FileNotFoundError as exc:
        _log(f"error: {exc}")
        return EXIT_DATA
    except json.JSONDecodeError as exc:
        _log(f"error: invalid JSON input: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
