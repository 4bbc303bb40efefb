"""Experiment orchestration: config-driven pipelines over the other modules.

A run executes ingest -> (expand) -> index/embed -> (sample/train) ->
retrieve -> evaluate, persisting every artifact plus a manifest holding the
fully resolved configuration. Re-running from a manifest reproduces the run
byte-for-byte: all randomness is derived from the single top-level seed via
named sub-streams.

Relative input paths resolve against the ``FULLRANK_DATA_ROOT`` environment
variable when it is set.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import ENGLISH_STOPWORDS, AnalyzerConfig
from .corpus import Collection, DatasetSplit, concat_context, ingest_collection, ingest_dialogues
from .dense import HashedEncoder, VectorStore, build_store, dense_search, encode, export_store, fnv1a64, import_store
from .errors import StageError, ValidationError
from .evaluation import EvalReport, RunFile, evaluate_full_rank, run_from_scored_lists, write_run
from .expansion import Rm3Config, attach_expansions, rm3_expand
from .negatives import SamplerSpec, sample, write_sample_set
from .sparse import InvertedIndex, ScoredList, build_index, search
from .training import TrainConfig, save_checkpoint, train

__all__ = [
    "ExperimentConfig",
    "load_config",
    "run_experiment",
    "run_rm3_grid",
    "sub_seed",
]

logger = logging.getLogger(__name__)

PIPELINES = (
    "sparse",
    "sparse+rm3",
    "sparse+expansion",
    "dense_zeroshot_import",
    "dense_finetune",
)


def sub_seed(seed: int, name: str) -> int:
    """Derive a named, stable sub-seed from the run's top-level seed."""
    return fnv1a64(f"{seed}:{name}") & 0x7FFFFFFF


def _resolve(path: str | None) -> str | None:
    if path is None:
        return None
    p = Path(path)
    root = os.environ.get("FULLRANK_DATA_ROOT")
    if root and not p.is_absolute():
        return str(Path(root) / p)
    return str(p)


@dataclass
class ExperimentConfig:
    """Fully resolved description of one experiment run."""

    pipeline: str
    collection: str
    test: str
    output_dir: str
    name: str = "experiment"
    train_split: str | None = None
    validation_split: str | None = None
    expansion_file: str | None = None
    context_embeddings: str | None = None
    response_embeddings: str | None = None
    sampler: dict = field(default_factory=lambda: {"kind": "random"})
    negatives_per_context: int = 10
    rm3: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    encoder: dict = field(default_factory=dict)
    analyzer: dict = field(default_factory=dict)
    retrieval_depth: int = 100
    k_set: tuple[int, ...] = (1, 10)
    seed: int = 0

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ValidationError(f"unknown pipeline: {self.pipeline!r}")
        if max(self.k_set) > self.retrieval_depth:
            raise ValidationError("retrieval_depth must cover max(k_set)")
        if self.pipeline == "sparse+expansion" and not self.expansion_file:
            raise ValidationError("sparse+expansion requires expansion_file")
        if self.pipeline == "dense_zeroshot_import" and not (
            self.context_embeddings and self.response_embeddings
        ):
            raise ValidationError(
                "dense_zeroshot_import requires context_embeddings and "
                "response_embeddings"
            )
        if self.pipeline == "dense_finetune" and not (
            self.train_split and self.validation_split
        ):
            raise ValidationError(
                "dense_finetune requires train_split and validation_split"
            )

    def analyzer_config(self) -> AnalyzerConfig:
        stopwords = self.analyzer.get("stopwords", "english")
        return AnalyzerConfig(
            lowercase=self.analyzer.get("lowercase", True),
            stopwords=ENGLISH_STOPWORDS if stopwords == "english" else frozenset(),
            stemmer=self.analyzer.get("stemmer", "porter"),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pipeline": self.pipeline,
            "collection": self.collection,
            "test": self.test,
            "train_split": self.train_split,
            "validation_split": self.validation_split,
            "expansion_file": self.expansion_file,
            "context_embeddings": self.context_embeddings,
            "response_embeddings": self.response_embeddings,
            "sampler": self.sampler,
            "negatives_per_context": self.negatives_per_context,
            "rm3": self.rm3,
            "training": self.training,
            "encoder": self.encoder,
            "analyzer": self.analyzer,
            "retrieval_depth": self.retrieval_depth,
            "k_set": list(self.k_set),
            "seed": self.seed,
            "output_dir": self.output_dir,
        }


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON experiment config; explicit overrides win over file keys."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg})")
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    raw.pop("manifest_of", None)  # manifests are re-runnable configs
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"{path}: unknown config keys: {sorted(unknown)}")
    for key in ("collection", "test", "train_split", "validation_split",
                "expansion_file", "context_embeddings", "response_embeddings"):
        if raw.get(key):
            raw[key] = _resolve(raw[key])
    if "k_set" in raw:
        raw["k_set"] = tuple(raw["k_set"])
    missing = [k for k in ("pipeline", "collection", "test", "output_dir") if k not in raw]
    if missing:
        raise ValidationError(f"{path}: missing config keys: {missing}")
    return ExperimentConfig(**raw)


def _sampler_spec(cfg: ExperimentConfig) -> SamplerSpec:
    s = dict(cfg.sampler)
    denoise = s.get("denoise")
    return SamplerSpec(
        kind=s.get("kind", "random"),
        seed=s.get("seed", sub_seed(cfg.seed, "sampling")),
        query_mode=s.get("query_mode", "full_context"),
        subset_filter=s.get("subset_filter", False),
        denoise=tuple(denoise) if denoise else None,
        corpus=s.get("corpus", "native"),
    )


def _train_config(cfg: ExperimentConfig) -> TrainConfig:
    t = dict(cfg.training)
    t.setdefault("seed", sub_seed(cfg.seed, "training"))
    return TrainConfig(**t)


def _build_encoder(cfg: ExperimentConfig) -> HashedEncoder:
    e = dict(cfg.encoder)
    return HashedEncoder(
        buckets=e.get("buckets", 2**18),
        dim=e.get("dim", 64),
        seed=e.get("seed", sub_seed(cfg.seed, "init")),
        init_scale=e.get("init_scale"),
    )


class _Stage:
    """Context manager that rebrands stage failures with the stage name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        logger.info("stage: %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def _sparse_run(
    cfg: ExperimentConfig,
    index: InvertedIndex,
    split: DatasetSplit,
    analyzer: AnalyzerConfig,
) -> RunFile:
    lists: list[ScoredList] = []
    rm3_cfg = None
    if cfg.pipeline == "sparse+rm3":
        rm3_cfg = Rm3Config(
            fb_terms=cfg.rm3.get("fb_terms", 10),
            fb_docs=cfg.rm3.get("fb_docs", 10),
            orig_weight=cfg.rm3.get("orig_weight", 0.5),
        )
    for ctx, _ in split:
        query = concat_context(ctx)
        if rm3_cfg is not None:
            expanded = rm3_expand(
                index, query, rm3_cfg, first_pass_k=cfg.rm3.get("first_pass_k")
            )
            scored = search(index, expanded, k=cfg.retrieval_depth, query_id=ctx.id)
        else:
            scored = search(
                index, query, k=cfg.retrieval_depth, config=analyzer, query_id=ctx.id
            )
        lists.append(scored)
    return run_from_scored_lists(lists, tag=cfg.name)


def _dense_run_from_stores(
    cfg: ExperimentConfig,
    contexts: VectorStore,
    responses: VectorStore,
    split: DatasetSplit,
) -> RunFile:
    by_id = {cid: i for i, cid in enumerate(contexts.ids)}
    lists = []
    for ctx, _ in split:
        if ctx.id not in by_id:
            raise ValidationError(f"context {ctx.id!r} missing from embeddings")
        query = contexts.matrix[by_id[ctx.id]].astype(float)
        scored = dense_search(responses, query, k=cfg.retrieval_depth)
        lists.append(ScoredList(query_id=ctx.id, entries=scored.entries, cutoff=scored.cutoff))
    return run_from_scored_lists(lists, tag=cfg.name)


def _dense_run_from_encoder(
    cfg: ExperimentConfig,
    encoder: HashedEncoder,
    store: VectorStore,
    split: DatasetSplit,
    analyzer: AnalyzerConfig,
) -> RunFile:
    lists = []
    for ctx, _ in split:
        query = encode(encoder, concat_context(ctx), analyzer)
        scored = dense_search(store, query, k=cfg.retrieval_depth)
        lists.append(ScoredList(query_id=ctx.id, entries=scored.entries, cutoff=scored.cutoff))
    return run_from_scored_lists(lists, tag=cfg.name)


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Execute one configured pipeline; returns the artifact directory.

    Artifacts: ``manifest.json`` (re-runnable config), ``run.trec``,
    ``eval.json``, plus pipeline-specific intermediates (index, stores,
    sampled negatives, training log, checkpoint).
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    analyzer = cfg.analyzer_config()

    manifest = {"manifest_of": "fullrank-experiment", **cfg.to_dict()}
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )

    with _Stage("ingest"):
        collection = ingest_collection(cfg.collection)
        test = ingest_dialogues(cfg.test, collection)

    if cfg.pipeline == "sparse+expansion":
        with _Stage("expand"):
            collection, report = attach_expansions(collection, cfg.expansion_file)
            (out / "expansion_report.json").write_text(
                json.dumps(
                    {
                        "attached": report.attached,
                        "unmatched_ids": list(report.unmatched_ids),
                    },
                    indent=2,
                )
                + "\n",
                encoding="utf-8",
            )

    if cfg.pipeline.startswith("sparse"):
        with _Stage("index"):
            index = build_index(
                collection, analyzer, use_expansions=cfg.pipeline == "sparse+expansion"
            )
        with _Stage("retrieve"):
            run = _sparse_run(cfg, index, test, analyzer)

    elif cfg.pipeline == "dense_zeroshot_import":
        with _Stage("import"):
            contexts = import_store(cfg.context_embeddings)
            responses = import_store(cfg.response_embeddings)
        with _Stage("retrieve"):
            run = _dense_run_from_stores(cfg, contexts, responses, test)

    else:  # dense_finetune
        with _Stage("ingest-train"):
            train_split = ingest_dialogues(cfg.train_split, collection)
            validation = ingest_dialogues(cfg.validation_split, collection)
        with _Stage("embed"):
            encoder = _build_encoder(cfg)
        with _Stage("sample"):
            spec = _sampler_spec(cfg)
            backend_index = backend_store = None
            if spec.kind == "sparse_topk":
                backend_index = build_index(collection, analyzer)
            elif spec.kind == "dense_topk":
                backend_store = build_store(encoder, collection, analyzer)
            negatives = sample(
                spec,
                train_split,
                collection,
                m=cfg.negatives_per_context,
                index=backend_index,
                store=backend_store,
                encoder=encoder,
                config=analyzer,
            )
            write_sample_set(negatives, out / "negatives.jsonl")
        with _Stage("train"):
            train_cfg = _train_config(cfg)
            state = train(
                train_split,
                validation,
                collection,
                encoder,
                negatives.as_training_map(),
                train_cfg,
                config=analyzer,
                log_path=out / "training_log.jsonl",
            )
            encoder.load_parameters(state.parameters)
            save_checkpoint(encoder, state, train_cfg, out / "checkpoint")
        with _Stage("retrieve"):
            store = build_store(encoder, collection, analyzer)
            export_store(store, out / "responses.dvec")
            run = _dense_run_from_encoder(cfg, encoder, store, test, analyzer)

    with _Stage("evaluate"):
        write_run(run, out / "run.trec")
        report = evaluate_full_rank(run, test, cfg.k_set)
        (out / "eval.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
    logger.info("artifacts written to %s", out)
    return out


def run_rm3_grid(cfg: ExperimentConfig) -> Path:
    """Sweep the full feedback hyperparameter grid and emit a summary CSV.

    The grid is the cross product {5,10,15} x {5,10,15} x {0.5,0.7} over
    (fb_terms, fb_docs, orig_weight): 18 configurations, one CSV row each,
    with the plain ranking baseline reported alongside in ``grid.json``.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    analyzer = cfg.analyzer_config()
    with _Stage("ingest"):
        collection = ingest_collection(cfg.collection)
        test = ingest_dialogues(cfg.test, collection)
    with _Stage("index"):
        index = build_index(collection, analyzer)

    with _Stage("grid"):
        baseline_lists = [
            search(index, concat_context(ctx), k=cfg.retrieval_depth,
                   config=analyzer, query_id=ctx.id)
            for ctx, _ in test
        ]
        baseline = evaluate_full_rank(
            run_from_scored_lists(baseline_lists), test, cfg.k_set
        )

        rows = []
        for rm3_cfg in Rm3Config.grid():
            lists = []
            for ctx, _ in test:
                expanded = rm3_expand(index, concat_context(ctx), rm3_cfg)
                scored = search(index, expanded, k=cfg.retrieval_depth, query_id=ctx.id)
                lists.append(scored)
            report = evaluate_full_rank(run_from_scored_lists(lists), test, cfg.k_set)
            rows.append((rm3_cfg, report))

        header = ["fb_terms", "fb_docs", "orig_weight"] + [
            f"recall@{k}" for k in sorted(cfg.k_set)
        ]
        lines = [",".join(header)]
        for rm3_cfg, report in rows:
            cells = [str(rm3_cfg.fb_terms), str(rm3_cfg.fb_docs), str(rm3_cfg.orig_weight)]
            cells += [repr(report.recall[k]) for k in sorted(cfg.k_set)]
            lines.append(",".join(cells))
        (out / "rm3_grid.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        (out / "grid.json").write_text(
            json.dumps(
                {
                    "baseline": baseline.to_dict(),
                    "grid": [
                        {
                            "fb_terms": c.fb_terms,
                            "fb_docs": c.fb_docs,
                            "orig_weight": c.orig_weight,
                            **r.to_dict(),
                        }
                        for c, r in rows
                    ],
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
    return out
