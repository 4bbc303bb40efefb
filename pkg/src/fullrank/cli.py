"""Command-line interface.

Exit codes: 0 on success, 1 on validation errors (bad input files, configs,
arguments), 2 on runtime failures. Relative data paths in configs resolve
against ``FULLRANK_DATA_ROOT`` when that variable is set.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .analysis import ENGLISH_STOPWORDS, AnalyzerConfig
from .corpus import concat_context, ingest_collection, ingest_dialogues, write_collection
from .dense import HashedEncoder, build_store, dense_search, encode, export_store, import_store
from .errors import FullrankError, ValidationError
from .evaluation import evaluate_full_rank, paired_ttest, read_run, run_from_scored_lists, write_run
from .expansion import attach_expansions, expansion_stats
from .negatives import SamplerSpec, export_annotation_sample, read_sample_set, sample, write_sample_set
from .sparse import build_index, load_index, save_index, search
from .training import TrainConfig, save_checkpoint, train

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise ValidationError(message)


def _analyzer_from_args(args) -> AnalyzerConfig:
    return AnalyzerConfig(
        lowercase=not args.no_lowercase,
        stopwords=frozenset() if args.no_stopwords else ENGLISH_STOPWORDS,
        stemmer="none" if args.no_stemming else "porter",
    )


def _add_analyzer_flags(parser) -> None:
    parser.add_argument("--no-lowercase", action="store_true")
    parser.add_argument("--no-stopwords", action="store_true")
    parser.add_argument("--no-stemming", action="store_true")


def _write_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_index(args) -> None:
    collection = ingest_collection(args.collection)
    index = build_index(
        collection, _analyzer_from_args(args), use_expansions=args.use_expansions
    )
    save_index(index, args.output)
    print(f"indexed {index.N} documents, {len(index.postings)} terms -> {args.output}")


def _cmd_search(args) -> None:
    index = load_index(args.index)
    if args.query is not None:
        scored = search(index, args.query, k=args.k)
        for rank, (doc_id, score) in enumerate(scored.entries, start=1):
            print(f"{rank}\t{doc_id}\t{score:.6f}")
        return
    collection = ingest_collection(args.collection)
    split = ingest_dialogues(args.dialogues, collection)
    lists = [
        search(index, concat_context(ctx), k=args.k, query_id=ctx.id)
        for ctx, _ in split
    ]
    write_run(run_from_scored_lists(lists, tag=args.tag), args.output)
    print(f"wrote run for {len(split)} queries -> {args.output}")


def _cmd_expand_attach(args) -> None:
    collection = ingest_collection(args.collection)
    augmented, report = attach_expansions(collection, args.expansions)
    write_collection(augmented, args.output)
    print(
        f"attached expansions to {report.attached} responses "
        f"({len(report.unmatched_ids)} unmatched ids) -> {args.output}"
    )
    if report.unmatched_ids:
        logger.warning("unmatched ids: %s", list(report.unmatched_ids)[:20])


def _cmd_expand_stats(args) -> None:
    before = ingest_collection(args.before)
    after = ingest_collection(args.after)
    split = ingest_dialogues(args.dialogues, before)
    stats = expansion_stats(split, before, after)
    _write_json(
        {
            "avg_context_len": stats.avg_context_len,
            "avg_response_len": stats.avg_response_len,
            "avg_expansion_len": stats.avg_expansion_len,
            "pct_new_words": stats.pct_new_words,
        },
        args.output,
    )


def _cmd_embed(args) -> None:
    collection = ingest_collection(args.collection)
    encoder = HashedEncoder(buckets=args.buckets, dim=args.dim, seed=args.seed)
    store = build_store(encoder, collection, _analyzer_from_args(args))
    export_store(store, args.output)
    print(f"embedded {len(store)} responses at dim {store.dim} -> {args.output}")


def _cmd_import_embeddings(args) -> None:
    store = import_store(args.input)
    print(f"valid embedding file: {len(store)} rows, dim {store.dim}")


def _cmd_sample_negatives(args) -> None:
    collection = ingest_collection(args.collection)
    split = ingest_dialogues(args.dialogues, collection)
    analyzer = _analyzer_from_args(args)
    spec = SamplerSpec(
        kind=args.kind,
        seed=args.seed,
        query_mode="last_utterance" if args.last_utterance else "full_context",
        subset_filter=args.subset_filter,
        denoise=(args.denoise_k, args.m) if args.denoise_k else None,
    )
    index = store = encoder = None
    if args.kind == "sparse_topk":
        index = (
            load_index(args.index) if args.index else build_index(collection, analyzer)
        )
    elif args.kind == "dense_topk":
        encoder = HashedEncoder(buckets=args.buckets, dim=args.dim, seed=args.encoder_seed)
        store = (
            import_store(args.store)
            if args.store
            else build_store(encoder, collection, analyzer)
        )
    sample_set = sample(
        spec, split, collection, m=args.m,
        index=index, store=store, encoder=encoder, config=analyzer,
    )
    write_sample_set(sample_set, args.output)
    print(f"sampled negatives for {len(sample_set.entries)} contexts -> {args.output}")


def _cmd_train(args) -> None:
    collection = ingest_collection(args.collection)
    train_split = ingest_dialogues(args.train, collection)
    validation = ingest_dialogues(args.validation, collection)
    negatives = read_sample_set(args.negatives)
    cfg = TrainConfig(
        loss=args.loss,
        inclusive_denominator=args.inclusive_denominator,
        margin=args.margin,
        steps=args.steps,
        validate_every=args.validate_every,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        weight_decay=args.weight_decay,
        seed=args.seed,
    )
    encoder = HashedEncoder(buckets=args.buckets, dim=args.dim, seed=args.encoder_seed)
    state = train(
        train_split,
        validation,
        collection,
        encoder,
        negatives.as_training_map(),
        cfg,
        config=_analyzer_from_args(args),
        log_path=args.log,
    )
    encoder.load_parameters(state.parameters)
    save_checkpoint(encoder, state, cfg, args.checkpoint)
    print(
        f"trained {state.step} steps; best validation MAP "
        f"{state.best_validation_map:.4f} at step {state.best_step}"
    )


def _cmd_evaluate(args) -> None:
    collection = ingest_collection(args.collection)
    split = ingest_dialogues(args.dialogues, collection)
    run = read_run(args.run)
    report = evaluate_full_rank(run, split, tuple(args.k_set))
    _write_json(report.to_dict(), args.output)


def _cmd_ttest(args) -> None:
    collection = ingest_collection(args.collection)
    split = ingest_dialogues(args.dialogues, collection)
    run_a = read_run(args.run_a)
    run_b = read_run(args.run_b)
    results = []
    for k in args.k_set:
        rep_a = evaluate_full_rank(run_a, split, (k,))
        rep_b = evaluate_full_rank(run_b, split, (k,))
        qids = sorted(rep_a.per_query_hits[k])
        a = [rep_a.per_query_hits[k][q] for q in qids]
        b = [rep_b.per_query_hits[k][q] for q in qids]
        report = paired_ttest(
            a, b,
            confidence=args.confidence,
            m_comparisons=args.m_comparisons,
            label=f"recall@{k}",
        )
        results.append(report.to_dict())
    _write_json({"comparisons": results}, args.output)


def _cmd_export_annotation(args) -> None:
    spec = json.loads(Path(args.config).read_text(encoding="utf-8"))
    datasets = []
    for ds in spec["datasets"]:
        collection = ingest_collection(ds["collection"])
        split = ingest_dialogues(ds["dialogues"], collection)
        datasets.append((ds["name"], split, collection))
    samplers = []
    for s in spec["samplers"]:
        sets = {name: read_sample_set(path) for name, path in s["sample_sets"].items()}
        samplers.append((s["name"], sets))
    rows = export_annotation_sample(
        datasets,
        samplers,
        args.output,
        contexts_per_dataset=args.contexts_per_dataset,
        negs_per_context=args.negs_per_context,
        seed=args.seed,
    )
    print(f"wrote {rows} worksheet rows -> {args.output}")


def _cmd_rm3_grid(args) -> None:
    cfg = harness.load_config(args.config, overrides={"output_dir": args.output_dir})
    out = harness.run_rm3_grid(cfg)
    print(f"grid artifacts in {out}")


def _cmd_run(args) -> None:
    overrides = {
        "output_dir": args.output_dir,
        "seed": args.seed,
        "pipeline": args.pipeline,
    }
    cfg = harness.load_config(args.config, overrides=overrides)
    out = harness.run_experiment(cfg)
    print(f"artifacts in {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fullrank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and persist an inverted index")
    p.add_argument("--collection", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--use-expansions", action="store_true")
    _add_analyzer_flags(p)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("search", help="query an index (one query or a whole split)")
    p.add_argument("--index", required=True)
    p.add_argument("--query")
    p.add_argument("--collection")
    p.add_argument("--dialogues")
    p.add_argument("--output")
    p.add_argument("--tag", default="fullrank")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("expand-attach", help="append expansion predictions to responses")
    p.add_argument("--collection", required=True)
    p.add_argument("--expansions", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_expand_attach)

    p = sub.add_parser("expand-stats", help="summarize an augmentation pass")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--dialogues", required=True)
    p.add_argument("--output")
    p.set_defaults(func=_cmd_expand_stats)

    p = sub.add_parser("embed", help="embed a collection with the hashed encoder")
    p.add_argument("--collection", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--buckets", type=int, default=2**18)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    _add_analyzer_flags(p)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("import-embeddings", help="validate an embedding file")
    p.add_argument("--input", required=True)
    p.set_defaults(func=_cmd_import_embeddings)

    p = sub.add_parser("sample-negatives", help="sample negatives for a split")
    p.add_argument("--collection", required=True)
    p.add_argument("--dialogues", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--kind", choices=("random", "sparse_topk", "dense_topk"),
                   default="random")
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--last-utterance", action="store_true")
    p.add_argument("--subset-filter", action="store_true")
    p.add_argument("--denoise-k", type=int)
    p.add_argument("--index")
    p.add_argument("--store")
    p.add_argument("--buckets", type=int, default=2**18)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--encoder-seed", type=int, default=0)
    _add_analyzer_flags(p)
    p.set_defaults(func=_cmd_sample_negatives)

    p = sub.add_parser("train", help="fine-tune the hashed encoder")
    p.add_argument("--collection", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--validation", required=True)
    p.add_argument("--negatives", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--log")
    p.add_argument("--loss", choices=("mnrl", "contrastive"), default="mnrl")
    p.add_argument("--inclusive-denominator", action="store_true")
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--validate-every", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=5)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--buckets", type=int, default=2**18)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--encoder-seed", type=int, default=0)
    _add_analyzer_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="recall over the full collection")
    p.add_argument("--run", required=True)
    p.add_argument("--collection", required=True)
    p.add_argument("--dialogues", required=True)
    p.add_argument("--k-set", type=int, nargs="+", default=[1, 10])
    p.add_argument("--output")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ttest", help="paired significance test between two runs")
    p.add_argument("--run-a", required=True)
    p.add_argument("--run-b", required=True)
    p.add_argument("--collection", required=True)
    p.add_argument("--dialogues", required=True)
    p.add_argument("--k-set", type=int, nargs="+", default=[1, 10])
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--m-comparisons", type=int, default=1)
    p.add_argument("--output")
    p.set_defaults(func=_cmd_ttest)

    p = sub.add_parser("export-annotation", help="export the annotation worksheet")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--contexts-per-dataset", type=int, default=3)
    p.add_argument("--negs-per-context", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_export_annotation)

    p = sub.add_parser("rm3-grid", help="sweep the feedback hyperparameter grid")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.set_defaults(func=_cmd_rm3_grid)

    p = sub.add_parser("run", help="run a full configured pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--pipeline", choices=harness.PIPELINES)
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FullrankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # unexpected runtime failure
        logger.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
