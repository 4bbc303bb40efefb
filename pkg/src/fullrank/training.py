"""Fine-tuning of the hashed encoder on (context, positive, negatives) data.

The default loss treats each batch's positives as a softmax candidate set:

    loss = -1/B * sum_i [ s(i, pos_i) - log sum_{c != pos_i} exp(s(i, c)) ]

where the candidate set holds every positive in the batch followed by every
example's hard negatives, and s is the dot product of mean-pooled vectors.
The printed form above excludes the positive's own score from the
log-sum-exp; ``inclusive_denominator=True`` switches to the conventional
softmax cross-entropy that includes it. An alternative margin loss over
(distance, label) pairs is provided for comparison runs.

Gradients are analytic throughout and checked against central finite
differences by :func:`finite_diff_check`.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import AnalyzerConfig, analyze
from .corpus import Collection, DatasetSplit, DialogueContext, concat_context
from .dense import HashedEncoder
from .errors import TrainingDiverged, ValidationError
from .evaluation import rerank_map

__all__ = [
    "TrainingExample",
    "Batch",
    "TrainConfig",
    "TrainState",
    "ScoreMatrix",
    "score_matrix",
    "mnrl_loss",
    "contrastive_loss",
    "train",
    "finite_diff_check",
    "save_checkpoint",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingExample:
    """One training triple: context, its true response, sampled negatives."""

    context: DialogueContext
    positive_id: str
    negative_ids: tuple[str, ...]

    def __post_init__(self):
        if self.positive_id in self.negative_ids:
            raise ValidationError(
                f"positive {self.positive_id!r} appears among its own negatives"
            )


@dataclass(frozen=True)
class Batch:
    """A group of training examples scored jointly; contexts must be distinct."""

    examples: tuple[TrainingExample, ...]

    def __post_init__(self):
        ids = [ex.context.id for ex in self.examples]
        if len(set(ids)) != len(ids):
            raise ValidationError("batch contains duplicate contexts")

    def __len__(self) -> int:
        return len(self.examples)


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "mnrl"  # "mnrl" or "contrastive"
    inclusive_denominator: bool = False
    margin: float = 0.5
    steps: int = 10_000
    validate_every: int = 100
    batch_size: int = 5
    learning_rate: float = 0.1
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.loss not in ("mnrl", "contrastive"):
            raise ValidationError(f"unknown loss: {self.loss!r}")
        if not (self.steps >= self.validate_every >= 1):
            raise ValidationError("need steps >= validate_every >= 1")
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2")
        if self.margin <= 0:
            raise ValidationError("margin must be positive")


@dataclass
class TrainState:
    """Outcome of a training run: best parameters and the validation trace."""

    parameters: np.ndarray
    step: int
    best_validation_map: float
    best_step: int
    map_series: tuple[tuple[int, float], ...]
    rng_state: dict = field(repr=False, default_factory=dict)


@dataclass(frozen=True)
class ScoreMatrix:
    """Batch score matrix plus the candidate bookkeeping around it.

    Row i scores context i against every candidate column; the candidate
    list holds the batch's positives (in batch order) followed by each
    example's negatives, with duplicate ids collapsed to their first
    column. ``positive_cols[i]`` is the column of row i's positive, which
    is ``i`` whenever all candidate ids are distinct.
    """

    scores: np.ndarray
    candidate_ids: tuple[str, ...]
    positive_cols: tuple[int, ...]


def _candidate_order(batch: Batch) -> tuple[list[str], list[int]]:
    """Collapse the batch's candidate ids, keeping first occurrences."""
    column: dict[str, int] = {}
    candidates: list[str] = []
    duplicates = 0
    for ex in batch.examples:
        if ex.positive_id not in column:
            column[ex.positive_id] = len(candidates)
            candidates.append(ex.positive_id)
        else:
            duplicates += 1
    for ex in batch.examples:
        for neg in ex.negative_ids:
            if neg not in column:
                column[neg] = len(candidates)
                candidates.append(neg)
            else:
                duplicates += 1
    if duplicates:
        logger.info("collapsed %d duplicate candidate columns", duplicates)
    positive_cols = [column[ex.positive_id] for ex in batch.examples]
    return candidates, positive_cols


def score_matrix(
    encoder,
    batch: Batch,
    collection: Collection,
    config: AnalyzerConfig | None = None,
) -> ScoreMatrix:
    """Score every context in the batch against the batch's candidate set."""
    if len(batch) < 2:
        raise ValidationError("batch must hold at least 2 examples")
    candidates, positive_cols = _candidate_order(batch)
    contexts = np.stack(
        [
            encoder.encode_tokens(analyze(concat_context(ex.context), config))
            for ex in batch.examples
        ]
    )
    cand_vecs = np.stack(
        [
            encoder.encode_tokens(analyze(collection[cid].text, config))
            for cid in candidates
        ]
    )
    return ScoreMatrix(
        scores=contexts @ cand_vecs.T,
        candidate_ids=tuple(candidates),
        positive_cols=tuple(positive_cols),
    )


def mnrl_loss(
    scores: np.ndarray,
    inclusive_denominator: bool = False,
    positive_cols: tuple[int, ...] | None = None,
) -> tuple[float, np.ndarray]:
    """Batch softmax ranking loss and its gradient w.r.t. the score matrix.

    With the exclusive denominator (default) the positive's own score is
    left out of each row's log-sum-exp, matching the printed loss formula;
    the inclusive variant matches the common library implementation.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2:
        raise ValidationError("score matrix must be 2-dimensional")
    B, C = scores.shape
    if positive_cols is None:
        positive_cols = tuple(range(B))
    if len(positive_cols) != B or any(not 0 <= c < C for c in positive_cols):
        raise ValidationError("positive_cols does not address the score matrix")
    if not inclusive_denominator and B < 2:
        raise ValidationError("empty negative set: need B >= 2 for the batch loss")

    mask = np.ones_like(scores, dtype=bool)
    if not inclusive_denominator:
        mask[np.arange(B), positive_cols] = False
        if not mask.any(axis=1).all():
            raise ValidationError("empty negative set: a row has no denominator terms")

    shifted = np.where(mask, scores, -np.inf)
    row_max = shifted.max(axis=1, keepdims=True)
    exp = np.exp(shifted - row_max)
    denom = exp.sum(axis=1, keepdims=True)
    log_denom = (row_max + np.log(denom)).squeeze(axis=1)

    positives = scores[np.arange(B), positive_cols]
    loss = float(-(positives - log_denom).mean())

    softmax = exp / denom  # zero where masked out
    grad = softmax / B
    grad[np.arange(B), positive_cols] -= 1.0 / B
    return loss, grad


def contrastive_loss(
    pairs: list[tuple[float, int]], margin: float
) -> tuple[float, np.ndarray]:
    """Margin loss over (distance, label) pairs and gradient per distance.

    Each pair contributes ``d**2`` when labeled relevant (1) and
    ``max(0, margin - d)**2`` otherwise; the result is the mean over pairs.
    """
    if margin <= 0:
        raise ValidationError("margin must be positive")
    if not pairs:
        raise ValidationError("no pairs given")
    distances = np.array([d for d, _ in pairs], dtype=float)
    labels = np.array([y for _, y in pairs], dtype=float)
    if np.any(distances < 0):
        raise ValidationError("distances must be non-negative")
    if not set(np.unique(labels)) <= {0.0, 1.0}:
        raise ValidationError("labels must be 0 or 1")
    n = len(pairs)
    clamped = np.maximum(0.0, margin - distances)
    loss = float((labels * distances**2 + (1.0 - labels) * clamped**2).mean())
    grads = (labels * 2.0 * distances - (1.0 - labels) * 2.0 * clamped) / n
    return loss, grads


# ---------------------------------------------------------------------------
# Parameter gradients through the hashed encoder.
# ---------------------------------------------------------------------------


class _TokenCache:
    """Bucket-index arrays for context/candidate texts, computed once."""

    def __init__(self, encoder: HashedEncoder, collection: Collection,
                 config: AnalyzerConfig | None):
        self.encoder = encoder
        self.collection = collection
        self.config = config
        self._context: dict[str, np.ndarray] = {}
        self._response: dict[str, np.ndarray] = {}

    def _buckets(self, text: str) -> np.ndarray:
        tokens = analyze(text, self.config)
        return np.fromiter(
            (self.encoder.bucket(t) for t in tokens), dtype=np.int64
        )

    def context(self, ctx: DialogueContext) -> np.ndarray:
        arr = self._context.get(ctx.id)
        if arr is None:
            arr = self._context[ctx.id] = self._buckets(concat_context(ctx))
        return arr

    def response(self, rid: str) -> np.ndarray:
        arr = self._response.get(rid)
        if arr is None:
            arr = self._response[rid] = self._buckets(self.collection[rid].text)
        return arr


def _mean_vector(table: np.ndarray, buckets: np.ndarray, dim: int) -> np.ndarray:
    if buckets.size == 0:
        return np.zeros(dim)
    return table[buckets].mean(axis=0)


def _scatter_mean_grad(
    grad: np.ndarray, buckets: np.ndarray, upstream: np.ndarray
) -> None:
    """Accumulate d(mean of rows)/d(table) contributions in place."""
    if buckets.size == 0:
        return
    np.add.at(grad, buckets, upstream / buckets.size)


def _batch_loss_and_grad(
    encoder: HashedEncoder,
    batch: Batch,
    cache: _TokenCache,
    cfg: TrainConfig,
) -> tuple[float, np.ndarray]:
    """Loss of one batch and its gradient w.r.t. the embedding table."""
    table = encoder.table
    dim = encoder.dim
    ctx_buckets = [cache.context(ex.context) for ex in batch.examples]
    U = np.stack([_mean_vector(table, b, dim) for b in ctx_buckets])

    grad = np.zeros_like(table)
    if cfg.loss == "mnrl":
        candidates, positive_cols = _candidate_order(batch)
        cand_buckets = [cache.response(cid) for cid in candidates]
        V = np.stack([_mean_vector(table, b, dim) for b in cand_buckets])
        loss, dscores = mnrl_loss(
            U @ V.T, cfg.inclusive_denominator, tuple(positive_cols)
        )
        dU = dscores @ V
        dV = dscores.T @ U
        for buckets, upstream in zip(ctx_buckets, dU):
            _scatter_mean_grad(grad, buckets, upstream)
        for buckets, upstream in zip(cand_buckets, dV):
            _scatter_mean_grad(grad, buckets, upstream)
        return loss, grad

    # Margin loss: one relevant pair plus one pair per hard negative.
    pair_vectors: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
    pairs: list[tuple[float, int]] = []
    for i, ex in enumerate(batch.examples):
        for rid, label in ((ex.positive_id, 1), *((n, 0) for n in ex.negative_ids)):
            rb = cache.response(rid)
            v = _mean_vector(table, rb, dim)
            diff = U[i] - v
            pairs.append((float(np.linalg.norm(diff)), label))
            pair_vectors.append((ctx_buckets[i], rb, diff, v))
    loss, ddist = contrastive_loss(pairs, cfg.margin)
    for (cb, rb, diff, _), g, (dist, _) in zip(pair_vectors, ddist, pairs):
        if dist == 0.0 or g == 0.0:
            continue
        du = g * diff / dist
        _scatter_mean_grad(grad, cb, du)
        _scatter_mean_grad(grad, rb, -du)
    return loss, grad


# ---------------------------------------------------------------------------
# Training loop.
# ---------------------------------------------------------------------------


def _build_validation_lists(
    validation: DatasetSplit,
    collection: Collection,
    rng: np.random.Generator,
    list_size: int = 10,
) -> list[tuple[DialogueContext, list[str]]]:
    """Freeze one candidate list per validation context: positive + random."""
    all_ids = np.array(collection.ids(), dtype=object)
    lists = []
    for ctx, positive in validation:
        pool = all_ids[all_ids != positive]
        n_neg = min(list_size - 1, len(pool))
        negatives = rng.choice(pool, size=n_neg, replace=False)
        lists.append((ctx, [positive, *negatives.tolist()]))
    return lists


def _validation_map(
    encoder: HashedEncoder,
    lists: list[tuple[DialogueContext, list[str]]],
    cache: _TokenCache,
) -> float:
    table = encoder.table
    ranked_labels = []
    for ctx, candidates in lists:
        u = _mean_vector(table, cache.context(ctx), encoder.dim)
        scored = []
        for j, cid in enumerate(candidates):
            v = _mean_vector(table, cache.response(cid), encoder.dim)
            scored.append((-float(u @ v), cid, 1 if j == 0 else 0))
        scored.sort()
        ranked_labels.append([label for _, _, label in scored])
    return rerank_map(ranked_labels)


def train(
    split: DatasetSplit,
    validation: DatasetSplit,
    collection: Collection,
    encoder: HashedEncoder,
    negatives: dict[str, list[str]],
    cfg: TrainConfig,
    config: AnalyzerConfig | None = None,
    log_path: str | Path | None = None,
) -> TrainState:
    """SGD over batches of the split, keeping the best-validation snapshot.

    ``negatives`` maps context ids to their sampled hard-negative response
    ids (see the negatives module). Validation candidate lists are frozen
    at run start. The run is deterministic given ``cfg.seed``; a non-finite
    loss aborts with diagnostics.
    """
    examples = []
    for ctx, positive in split:
        negs = negatives.get(ctx.id)
        if negs is None:
            raise ValidationError(f"no negatives sampled for context {ctx.id!r}")
        examples.append(
            TrainingExample(
                context=ctx, positive_id=positive, negative_ids=tuple(negs)
            )
        )
    if len(examples) < cfg.batch_size:
        raise ValidationError("split smaller than one batch")

    shuffle_rng, val_rng = np.random.default_rng(cfg.seed).spawn(2)
    cache = _TokenCache(encoder, collection, config)
    val_lists = _build_validation_lists(validation, collection, val_rng)

    best_map = -np.inf
    best_step = 0
    best_params = encoder.table.copy()
    map_series: list[tuple[int, float]] = []
    log_rows: list[dict] = []

    step = 0
    while step < cfg.steps:
        order = shuffle_rng.permutation(len(examples))
        for start in range(0, len(order), cfg.batch_size):
            chunk = order[start : start + cfg.batch_size]
            if len(chunk) < 2:
                continue  # a 1-example tail cannot form in-batch negatives
            batch = Batch(examples=tuple(examples[i] for i in chunk))
            loss, grad = _batch_loss_and_grad(encoder, batch, cache, cfg)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at step {step + 1}",
                    diagnostics={
                        "step": step + 1,
                        "loss": loss,
                        "grad_norm": float(np.linalg.norm(grad)),
                        "param_norm": float(np.linalg.norm(encoder.table)),
                        "batch_contexts": [ex.context.id for ex in batch.examples],
                    },
                )
            if cfg.weight_decay:
                grad = grad + cfg.weight_decay * encoder.table
            encoder.table -= cfg.learning_rate * grad
            step += 1
            row = {"step": step, "loss": loss}
            if step % cfg.validate_every == 0:
                current = _validation_map(encoder, val_lists, cache)
                map_series.append((step, current))
                row["validation_map"] = current
                if current > best_map:
                    best_map = current
                    best_step = step
                    best_params = encoder.table.copy()
            log_rows.append(row)
            if step >= cfg.steps:
                break

    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for row in log_rows:
                fh.write(json.dumps(row) + "\n")

    return TrainState(
        parameters=best_params,
        step=step,
        best_validation_map=float(best_map),
        best_step=best_step,
        map_series=tuple(map_series),
        rng_state=shuffle_rng.bit_generator.state,
    )


def finite_diff_check(
    encoder: HashedEncoder,
    batch: Batch,
    cfg: TrainConfig,
    epsilon: float,
    collection: Collection,
    config: AnalyzerConfig | None = None,
    n_coords: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error of the analytic table gradient vs central differences.

    Coordinates are sampled (at least ``n_coords``) among buckets the batch
    actually touches; untouched buckets have exactly zero gradient under
    both methods.
    """
    if not 1e-7 <= epsilon <= 1e-2:
        raise ValidationError("epsilon must lie in [1e-7, 1e-2]")
    cache = _TokenCache(encoder, collection, config)
    _, grad = _batch_loss_and_grad(encoder, batch, cache, cfg)

    touched = set()
    for ex in batch.examples:
        touched.update(cache.context(ex.context).tolist())
        touched.update(cache.response(ex.positive_id).tolist())
        for neg in ex.negative_ids:
            touched.update(cache.response(neg).tolist())
    touched = sorted(touched)
    rng = np.random.default_rng(seed)
    coords: list[tuple[int, int]] = []
    while len(coords) < n_coords:
        b = touched[int(rng.integers(len(touched)))]
        j = int(rng.integers(encoder.dim))
        coords.append((b, j))

    max_rel = 0.0
    for b, j in coords:
        original = encoder.table[b, j]
        encoder.table[b, j] = original + epsilon
        loss_plus, _ = _batch_loss_and_grad(encoder, batch, cache, cfg)
        encoder.table[b, j] = original - epsilon
        loss_minus, _ = _batch_loss_and_grad(encoder, batch, cache, cfg)
        encoder.table[b, j] = original
        numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
        analytic = grad[b, j]
        scale = max(abs(numeric), abs(analytic), 1e-8)
        max_rel = max(max_rel, abs(numeric - analytic) / scale)
    return max_rel


def save_checkpoint(
    encoder: HashedEncoder,
    state: TrainState,
    cfg: TrainConfig,
    path_prefix: str | Path,
) -> None:
    """Write best parameters as a DVEC file plus a JSON sidecar."""
    from .dense import VectorStore, export_store

    prefix = Path(path_prefix)
    ids = [str(i) for i in range(encoder.buckets)]
    export_store(VectorStore(ids, state.parameters), prefix.with_suffix(".dvec"))
    sidecar = {
        "step": state.step,
        "best_step": state.best_step,
        "best_validation_map": state.best_validation_map,
        "map_series": [[s, m] for s, m in state.map_series],
        "config": {
            "loss": cfg.loss,
            "inclusive_denominator": cfg.inclusive_denominator,
            "margin": cfg.margin,
            "steps": cfg.steps,
            "validate_every": cfg.validate_every,
            "batch_size": cfg.batch_size,
            "learning_rate": cfg.learning_rate,
            "weight_decay": cfg.weight_decay,
        },
        "seed": cfg.seed,
        "buckets": encoder.buckets,
        "dim": encoder.dim,
    }
    prefix.with_suffix(".json").write_text(
        json.dumps(sidecar, indent=2) + "\n", encoding="utf-8"
    )
