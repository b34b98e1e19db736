"""Trainable projection towers over frozen base embeddings.

Two MLPs project request and item embeddings into a shared space where
the match score is a plain dot product. Training minimizes either a
composite objective (weighted binary cross entropy over all pairs plus an
in-batch InfoNCE term over the positive pairs) or the cosine-embedding
objective. Gradients are exact reverse-mode derivatives, hand-rolled so
the whole stack stays dependency-free and bit-reproducible.

Numeric policy: parameters and activations are float32 by default;
losses and gradient accumulation run in float64. Towers built with
dtype=float64 run end to end in float64, which is what the finite
difference checks use.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

EPS_PROB = 1e-7

ACT_LINEAR = "linear"
ACT_RELU = "relu"


class TowersError(ValueError):
    pass


class Objective(str, Enum):
    COMPOSITE = "COMPOSITE"
    COSINE_EMBEDDING = "COSINE_EMBEDDING"


@dataclass
class TowerParams:
    """One MLP: ordered (weight, bias) layers with an activation tag each.

    weights[l] has shape (fan_in, fan_out); biases[l] has shape (fan_out,).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self) -> None:
        if not (len(self.weights) == len(self.biases) == len(self.activations) >= 1):
            raise TowersError("tower needs at least one (weight, bias, activation) layer")
        for l, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise TowersError(f"layer {l}: weight {w.shape} and bias {b.shape} do not chain")
            if l > 0 and self.weights[l - 1].shape[1] != w.shape[0]:
                raise TowersError(f"layer {l}: fan-in {w.shape[0]} does not match previous fan-out")
            if act not in (ACT_LINEAR, ACT_RELU):
                raise TowersError(f"layer {l}: unknown activation {act!r}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise TowersError(f"layer {l}: non-finite parameter")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "TowerParams":
        return TowerParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 64
    alpha: float = 1.0
    beta: float = 1.0
    temperature: float = 0.07
    seed: int = 0
    objective: Objective = Objective.COMPOSITE
    hidden: tuple[int, ...] = (256, 256)
    out_dim: int = 128
    nottry_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise TowersError(f"lr must be >= 0, got {self.lr}")
        if self.epochs < 1:
            raise TowersError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise TowersError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.alpha < 0 or self.beta < 0:
            raise TowersError("loss weights must be nonnegative")
        if self.objective is Objective.COMPOSITE and self.alpha + self.beta <= 0:
            raise TowersError("composite objective needs alpha + beta > 0")
        if self.temperature <= 0:
            raise TowersError(f"temperature must be > 0, got {self.temperature}")
        if self.nottry_weight < 0:
            raise TowersError("nottry_weight must be nonnegative")


@dataclass
class ModelParams:
    request_tower: TowerParams
    item_tower: TowerParams
    hyper: TrainConfig | None = None

    def __post_init__(self) -> None:
        if self.request_tower.out_dim != self.item_tower.out_dim:
            raise TowersError(
                f"towers must share out_dim: {self.request_tower.out_dim} vs {self.item_tower.out_dim}"
            )

    def copy(self) -> "ModelParams":
        return ModelParams(self.request_tower.copy(), self.item_tower.copy(), self.hyper)


def init_tower(in_dim: int, hidden, out_dim: int, rng: np.random.Generator,
               dtype=np.float32) -> TowerParams:
    """He-initialized hidden layers with ReLU, linear output layer."""
    dims = [in_dim, *hidden, out_dim]
    weights, biases, acts = [], [], []
    for l in range(len(dims) - 1):
        fan_in, fan_out = dims[l], dims[l + 1]
        last = l == len(dims) - 2
        scale = math.sqrt(1.0 / fan_in) if last else math.sqrt(2.0 / fan_in)
        weights.append((rng.standard_normal((fan_in, fan_out)) * scale).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
        acts.append(ACT_LINEAR if last else ACT_RELU)
    return TowerParams(weights, biases, acts)


def init_model(config: TrainConfig, in_dim: int, dtype=np.float32) -> ModelParams:
    rng = np.random.Generator(np.random.PCG64(config.seed))
    req = init_tower(in_dim, config.hidden, config.out_dim, rng, dtype)
    item = init_tower(in_dim, config.hidden, config.out_dim, rng, dtype)
    return ModelParams(req, item, config)


# ---------------------------------------------------------------------------
# forward passes


def _trace(tower: TowerParams, x: np.ndarray):
    """Run a batch through the tower, keeping pre-activations for backprop."""
    if x.ndim != 2 or x.shape[1] != tower.in_dim:
        raise TowersError(f"input shape {x.shape} does not match tower in_dim {tower.in_dim}")
    pre, post = [], [x]
    h = x
    for w, b, act in zip(tower.weights, tower.biases, tower.activations):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0) if act == ACT_RELU else z
        post.append(h)
    return pre, post


def forward_batch(tower: TowerParams, x: np.ndarray) -> np.ndarray:
    """Project a (batch, in_dim) matrix to (batch, out_dim)."""
    _, post = _trace(tower, np.asarray(x))
    out = post[-1]
    if not np.all(np.isfinite(out)):
        raise TowersError("non-finite tower output")
    return out


def forward(tower: TowerParams, v: np.ndarray) -> np.ndarray:
    """Project a single embedding vector through the tower."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise TowersError(f"expected a vector, got shape {v.shape}")
    return forward_batch(tower, v[None, :])[0]


def _backprop(tower: TowerParams, pre, post, d_out: np.ndarray):
    """Exact reverse pass. d_out is dLoss/d(output), shape (batch, out_dim).

    ReLU derivative at exactly 0 is taken as 0. Accumulation is float64.
    """
    d_w = [None] * len(tower.weights)
    d_b = [None] * len(tower.biases)
    grad = d_out.astype(np.float64)
    for l in range(len(tower.weights) - 1, -1, -1):
        if tower.activations[l] == ACT_RELU:
            grad = grad * (pre[l] > 0)
        d_w[l] = post[l].astype(np.float64).T @ grad
        d_b[l] = grad.sum(axis=0)
        if l > 0:
            grad = grad @ tower.weights[l].astype(np.float64).T
    return d_w, d_b


# ---------------------------------------------------------------------------
# scores and losses


def score(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise TowersError(f"score: shape mismatch {u.shape} vs {v.shape}")
    return float(u @ v)


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise TowersError(f"cosine: shape mismatch {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise TowersError("cosine similarity undefined for zero-norm input")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def cosine_embedding_loss(x1: np.ndarray, x2: np.ndarray, y: int) -> float:
    """1 - cos for matched pairs, hinge at zero on cos for mismatched pairs."""
    if y not in (+1, -1):
        raise TowersError(f"label must be +1 or -1, got {y}")
    c = cosine_similarity(x1, x2)
    return 1.0 - c if y == +1 else max(0.0, c)


def predict_prob(s: float) -> float:
    """Squash a dot-product score to a probability, clamped away from {0, 1}."""
    if s >= 0:
        p = 1.0 / (1.0 + math.exp(-s))
    else:
        e = math.exp(s)
        p = e / (1.0 + e)
    return min(max(p, EPS_PROB), 1.0 - EPS_PROB)


def bce_loss(y_hat: float, y: int) -> float:
    if y not in (0, 1):
        raise TowersError(f"binary label must be 0 or 1, got {y}")
    p = min(max(y_hat, EPS_PROB), 1.0 - EPS_PROB)
    return -(y * math.log(p) + (1 - y) * math.log(1.0 - p))


def contrastive_loss(u: np.ndarray, v: np.ndarray, temperature: float = 0.07) -> float:
    """In-batch InfoNCE over positive pairs, request -> item direction.

    Rows of u and v are aligned positives; every other row of v acts as an
    in-batch negative. Stabilized with max-subtraction before the exp.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 2 or u.shape != v.shape:
        raise TowersError(f"contrastive inputs must be equal-shape matrices, got {u.shape} vs {v.shape}")
    b = u.shape[0]
    if b < 2:
        raise TowersError("contrastive loss needs batch size >= 2")
    if temperature <= 0:
        raise TowersError("temperature must be > 0")
    logits = (u @ v.T) / temperature
    shift = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shift).sum(axis=1)) + logits.max(axis=1)
    loss = float(np.mean(lse - np.diag(logits)))
    if not math.isfinite(loss):
        raise TowersError("non-finite contrastive loss")
    return loss


@dataclass(frozen=True)
class LossParts:
    total: float
    bce: float = 0.0
    contrastive: float = 0.0
    contrastive_skipped: bool = False


def composite_loss(u: np.ndarray, v: np.ndarray, y: np.ndarray,
                   alpha: float = 1.0, beta: float = 1.0, temperature: float = 0.07,
                   weights: np.ndarray | None = None) -> LossParts:
    """alpha * weighted-mean BCE over all pairs + beta * InfoNCE over positives.

    y is +1/-1 per pair. A batch with fewer than two positives skips the
    contrastive term and flags it.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    y = np.asarray(y)
    n = u.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    s = np.einsum("ij,ij->i", u, v)
    p = np.clip(1.0 / (1.0 + np.exp(-s)), EPS_PROB, 1.0 - EPS_PROB)
    y01 = (y + 1) // 2
    per_pair = -(y01 * np.log(p) + (1 - y01) * np.log(1.0 - p))
    bce = float((w * per_pair).sum() / w.sum())

    pos = np.flatnonzero(y == +1)
    skipped = False
    con = 0.0
    if beta > 0:
        if len(pos) >= 2:
            con = contrastive_loss(u[pos], v[pos], temperature)
        else:
            skipped = True
    total = alpha * bce + beta * con
    if not math.isfinite(total):
        raise TowersError("non-finite composite loss")
    return LossParts(total=total, bce=bce, contrastive=con, contrastive_skipped=skipped)


# ---------------------------------------------------------------------------
# gradients


@dataclass
class TowerGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class ModelGrads:
    request_tower: TowerGrads
    item_tower: TowerGrads


@dataclass(frozen=True)
class PairBatch:
    """Aligned arrays: base embeddings, +1/-1 labels, per-pair weights."""

    x_req: np.ndarray
    x_item: np.ndarray
    y: np.ndarray
    weight: np.ndarray | None = None


def _grad_outputs_composite(u, v, y, w, config: TrainConfig):
    """d(composite)/du, d(composite)/dv and the loss parts, all float64."""
    n = u.shape[0]
    s = np.einsum("ij,ij->i", u, v)
    sig = 1.0 / (1.0 + np.exp(-s))
    p = np.clip(sig, EPS_PROB, 1.0 - EPS_PROB)
    y01 = (y + 1) // 2
    per_pair = -(y01 * np.log(p) + (1 - y01) * np.log(1.0 - p))
    wsum = w.sum()
    bce = float((w * per_pair).sum() / wsum)
    # d(bce)/ds collapses to (p - y); the clamp zeroes the saturated tail
    unclamped = (sig > EPS_PROB) & (sig < 1.0 - EPS_PROB)
    ds = (p - y01) * unclamped * (w / wsum)
    du = config.alpha * ds[:, None] * v
    dv = config.alpha * ds[:, None] * u

    pos = np.flatnonzero(y == +1)
    con = 0.0
    skipped = False
    if config.beta > 0:
        if len(pos) >= 2:
            up, vp = u[pos], v[pos]
            tau = config.temperature
            logits = (up @ vp.T) / tau
            mx = logits.max(axis=1, keepdims=True)
            ex = np.exp(logits - mx)
            soft = ex / ex.sum(axis=1, keepdims=True)
            con = float(np.mean(np.log(ex.sum(axis=1)) + mx[:, 0] - np.diag(logits)))
            d_logits = (soft - np.eye(len(pos))) / (len(pos) * tau)
            du[pos] += config.beta * (d_logits @ vp)
            dv[pos] += config.beta * (d_logits.T @ up)
        else:
            skipped = True
    total = config.alpha * bce + config.beta * con
    parts = LossParts(total=total, bce=bce, contrastive=con, contrastive_skipped=skipped)
    return du, dv, parts


def _grad_outputs_cosine(u, v, y, w, config: TrainConfig):
    """d(mean cosine-embedding loss)/du, /dv with the hinge's zero branch at cos <= 0."""
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    if np.any(nu == 0) or np.any(nv == 0):
        raise TowersError("cosine objective hit a zero-norm tower output")
    dots = np.einsum("ij,ij->i", u, v)
    cos = dots / (nu * nv)
    per_pair = np.where(y == +1, 1.0 - cos, np.maximum(0.0, cos))
    wsum = w.sum()
    loss = float((w * per_pair).sum() / wsum)
    # dcos/du = v/(|u||v|) - cos * u/|u|^2
    dcos_du = v / (nu * nv)[:, None] - (cos / nu**2)[:, None] * u
    dcos_dv = u / (nu * nv)[:, None] - (cos / nv**2)[:, None] * v
    coef = np.where(y == +1, -1.0, (cos > 0).astype(np.float64)) * (w / wsum)
    du = coef[:, None] * dcos_du
    dv = coef[:, None] * dcos_dv
    return du, dv, LossParts(total=loss)


def grad(params: ModelParams, batch: PairBatch, config: TrainConfig):
    """Exact gradients of the configured objective for one batch.

    Returns (LossParts, ModelGrads) with float64 gradient arrays shaped
    like the parameters. Raises on a non-finite loss.
    """
    x_req = np.asarray(batch.x_req)
    x_item = np.asarray(batch.x_item)
    y = np.asarray(batch.y)
    n = x_req.shape[0]
    w = np.ones(n) if batch.weight is None else np.asarray(batch.weight, dtype=np.float64)
    pre_r, post_r = _trace(params.request_tower, x_req)
    pre_i, post_i = _trace(params.item_tower, x_item)
    u = post_r[-1].astype(np.float64)
    v = post_i[-1].astype(np.float64)

    if config.objective is Objective.COMPOSITE:
        du, dv, parts = _grad_outputs_composite(u, v, y, w, config)
    else:
        du, dv, parts = _grad_outputs_cosine(u, v, y, w, config)
    if not math.isfinite(parts.total):
        raise TowersError(f"non-finite loss on batch of {n} pairs (labels {np.unique(y)})")

    dw_r, db_r = _backprop(params.request_tower, pre_r, post_r, du)
    dw_i, db_i = _backprop(params.item_tower, pre_i, post_i, dv)
    grads = ModelGrads(TowerGrads(dw_r, db_r), TowerGrads(dw_i, db_i))
    for tg in (grads.request_tower, grads.item_tower):
        for arr in (*tg.weights, *tg.biases):
            if not np.all(np.isfinite(arr)):
                raise TowersError("non-finite gradient")
    return parts, grads


def objective_value(params: ModelParams, batch: PairBatch, config: TrainConfig) -> LossParts:
    """Loss only, via the same forward path the gradients differentiate."""
    u = forward_batch(params.request_tower, np.asarray(batch.x_req)).astype(np.float64)
    v = forward_batch(params.item_tower, np.asarray(batch.x_item)).astype(np.float64)
    y = np.asarray(batch.y)
    n = u.shape[0]
    w = np.ones(n) if batch.weight is None else np.asarray(batch.weight, dtype=np.float64)
    if config.objective is Objective.COMPOSITE:
        return composite_loss(u, v, y, config.alpha, config.beta, config.temperature, w)
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    if np.any(nu == 0) or np.any(nv == 0):
        raise TowersError("cosine objective hit a zero-norm tower output")
    cos = np.einsum("ij,ij->i", u, v) / (nu * nv)
    per_pair = np.where(y == +1, 1.0 - cos, np.maximum(0.0, cos))
    return LossParts(total=float((w * per_pair).sum() / w.sum()))


# ---------------------------------------------------------------------------
# optimizer and training loop


class Adam:
    """Standard Adam with bias correction; state arrays are float64."""

    def __init__(self, arrays: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.arrays = arrays
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros(a.shape, dtype=np.float64) for a in arrays]
        self.v = [np.zeros(a.shape, dtype=np.float64) for a in arrays]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        for i, (a, g) in enumerate(zip(self.arrays, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1**self.t)
            v_hat = self.v[i] / (1 - self.beta2**self.t)
            a -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(a.dtype)


def _flat_arrays(params: ModelParams) -> list[np.ndarray]:
    out = []
    for tower in (params.request_tower, params.item_tower):
        out.extend(tower.weights)
        out.extend(tower.biases)
    return out


def _flat_grads(grads: ModelGrads) -> list[np.ndarray]:
    out = []
    for tg in (grads.request_tower, grads.item_tower):
        out.extend(tg.weights)
        out.extend(tg.biases)
    return out


@dataclass
class EpochStats:
    epoch: int
    mean_train_loss: float
    dev_metrics: dict[str, float] = field(default_factory=dict)


@dataclass
class TrainingLog:
    epochs: list[EpochStats] = field(default_factory=list)
    contrastive_skipped_batches: int = 0

    @property
    def final_loss(self) -> float:
        return self.epochs[-1].mean_train_loss if self.epochs else float("nan")

    def to_dict(self) -> dict:
        return {
            "epochs": [
                {"epoch": e.epoch, "mean_train_loss": e.mean_train_loss, "dev_metrics": e.dev_metrics}
                for e in self.epochs
            ],
            "contrastive_skipped_batches": self.contrastive_skipped_batches,
        }


def _pair_weight(pair, config: TrainConfig) -> float:
    from .corpus import Interaction

    return config.nottry_weight if pair.interaction is Interaction.NOTTRY else 1.0


def train(config: TrainConfig, corpus, store, dev_corpus=None,
          dev_pool_seed: int = 0) -> tuple[ModelParams, TrainingLog]:
    """Train the two towers on a labeled corpus with Adam.

    Single-threaded and bit-reproducible for a fixed config and seed. The
    store must cover every id the corpus references; that is checked before
    the first step. Per-epoch mean train loss (and dev PREC@1/NDCG when a
    dev corpus is given) goes into the TrainingLog.
    """
    if not corpus.pairs:
        raise TowersError("corpus has no labeled pairs")
    missing = sorted(
        {p.request_id for p in corpus.pairs if p.request_id not in store}
        | {p.item_id for p in corpus.pairs if p.item_id not in store}
    )
    if missing:
        raise TowersError(f"store is missing {len(missing)} ids, first: {missing[:3]}")

    x_req = np.stack([store.lookup(p.request_id) for p in corpus.pairs])
    x_item = np.stack([store.lookup(p.item_id) for p in corpus.pairs])
    y = np.array([p.y for p in corpus.pairs], dtype=np.int64)
    w = np.array([_pair_weight(p, config) for p in corpus.pairs], dtype=np.float64)

    params = init_model(config, in_dim=store.dim)
    opt = Adam(_flat_arrays(params), lr=config.lr)
    shuffle_rng = np.random.Generator(np.random.PCG64(config.seed + 1))
    log = TrainingLog()
    n = len(corpus.pairs)
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = PairBatch(x_req[idx], x_item[idx], y[idx], w[idx])
            parts, grads = grad(params, batch, config)
            if parts.contrastive_skipped:
                log.contrastive_skipped_batches += 1
            opt.step(_flat_grads(grads))
            loss_sum += parts.total * len(idx)
        stats = EpochStats(epoch=epoch, mean_train_loss=loss_sum / n)
        if dev_corpus is not None and dev_corpus.pairs:
            stats.dev_metrics = _dev_metrics(params, dev_corpus, store)
        log.epochs.append(stats)
    return params, log


def _dev_metrics(params: ModelParams, dev_corpus, store) -> dict[str, float]:
    """PREC@1 and NDCG over each dev request's own labeled pool."""
    from .evaluation import ndcg, precision_at_k, RelevanceJudgment
    from .rank import RankedList, rank_entries

    prec, ndcgs = [], []
    by_req: dict[str, list] = {}
    for p in dev_corpus.pairs:
        by_req.setdefault(p.request_id, []).append(p)
    for rid in sorted(by_req):
        pool = by_req[rid]
        relevant = {p.item_id for p in pool if p.y == +1}
        if not relevant or len(pool) < 2:
            continue
        u = forward(params.request_tower, store.lookup(rid)).astype(np.float64)
        scored = []
        for p in pool:
            v = forward(params.item_tower, store.lookup(p.item_id)).astype(np.float64)
            scored.append((p.item_id, float(u @ v)))
        ranked = RankedList(request_id=rid, entries=rank_entries(scored))
        judgment = RelevanceJudgment(request_id=rid, relevant_items=frozenset(relevant))
        prec.append(precision_at_k(ranked, judgment, 1))
        ndcgs.append(ndcg(ranked, judgment))
    if not prec:
        return {}
    return {"prec@1": float(np.mean(prec)), "ndcg": float(np.mean(ndcgs))}


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"WLT1"
CHECKPOINT_VERSION = 1

_ACT_TAGS = {ACT_LINEAR: 0, ACT_RELU: 1}
_TAG_ACTS = {v: k for k, v in _ACT_TAGS.items()}

_CRC64_POLY = 0xC96C5795D7870F42  # reflected ECMA-182


def _crc64_table():
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ _CRC64_POLY if crc & 1 else crc >> 1
        table.append(crc)
    return table


_CRC64_TABLE = _crc64_table()


def crc64(data: bytes) -> int:
    crc = 0xFFFFFFFFFFFFFFFF
    for byte in data:
        crc = _CRC64_TABLE[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFFFFFFFFFF


def _tower_header(tower: TowerParams) -> bytes:
    parts = [struct.pack("<I", len(tower.weights))]
    for w, act in zip(tower.weights, tower.activations):
        parts.append(struct.pack("<IIB", w.shape[0], w.shape[1], _ACT_TAGS[act]))
    return b"".join(parts)


def _tower_payload(tower: TowerParams) -> bytes:
    parts = []
    for w, b in zip(tower.weights, tower.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    """Serialize both towers as f32 with a trailing CRC-64 over the payload."""
    payload = _tower_payload(params.request_tower) + _tower_payload(params.item_tower)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(_tower_header(params.request_tower))
        fh.write(_tower_header(params.item_tower))
        fh.write(payload)
        fh.write(struct.pack("<Q", crc64(payload)))


def _read_tower_header(blob: bytes, pos: int):
    (n_layers,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if not 1 <= n_layers <= 64:
        raise TowersError(f"checkpoint: implausible layer count {n_layers}")
    shapes, acts = [], []
    for _ in range(n_layers):
        fan_in, fan_out, tag = struct.unpack_from("<IIB", blob, pos)
        pos += 9
        if tag not in _TAG_ACTS:
            raise TowersError(f"checkpoint: unknown activation tag {tag}")
        shapes.append((fan_in, fan_out))
        acts.append(_TAG_ACTS[tag])
    return shapes, acts, pos


def _read_tower_payload(blob: bytes, pos: int, shapes, acts) -> tuple[TowerParams, int]:
    weights, biases = [], []
    for fan_in, fan_out in shapes:
        n = fan_in * fan_out
        w = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(fan_in, fan_out).copy()
        pos += 4 * n
        b = np.frombuffer(blob, dtype="<f4", count=fan_out, offset=pos).copy()
        pos += 4 * fan_out
        weights.append(w)
        biases.append(b)
    return TowerParams(weights, biases, list(acts)), pos


def load_checkpoint(path: str | Path) -> ModelParams:
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise TowersError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise TowersError(f"{path}: unsupported version {version}")
    shapes_r, acts_r, pos = _read_tower_header(blob, 8)
    shapes_i, acts_i, pos = _read_tower_header(blob, pos)
    payload_start = pos
    expected = sum(4 * (fi * fo + fo) for fi, fo in shapes_r + shapes_i)
    if len(blob) != payload_start + expected + 8:
        raise TowersError(f"{path}: payload size mismatch")
    req, pos = _read_tower_payload(blob, pos, shapes_r, acts_r)
    item, pos = _read_tower_payload(blob, pos, shapes_i, acts_i)
    (stored_crc,) = struct.unpack_from("<Q", blob, pos)
    actual = crc64(blob[payload_start : payload_start + expected])
    if stored_crc != actual:
        raise TowersError(f"{path}: CRC mismatch (stored {stored_crc:#x}, computed {actual:#x})")
    return ModelParams(req, item)
