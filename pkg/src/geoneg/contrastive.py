"""In-batch, MMCLIP and hybrid contrastive losses with analytic gradients and a trainer.

Scores are ``s(a, b) = exp(logit_scale) * <embed(a), embed(b)>``.  Each loss is
written as a function of its score matrix returning the loss and
``dL/dS``; :func:`backward` chains that through the similarity, the
normalisation and the two projections.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .encoder import DualEncoder
from .negatives import NegativeGroup

STRATEGIES = ("in-batch", "mmclip", "hybrid")
OPTIMIZERS = ("sgd", "sgd-momentum")
MOMENTUM = 0.9


def logsumexp(x: np.ndarray, axis=None) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis) if axis is not None else out.item()


def _softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# Losses on scores
# ---------------------------------------------------------------------------


def inbatch_loss_from_scores(S: np.ndarray) -> tuple[float, np.ndarray]:
    """Symmetric in-batch loss of an N x N score matrix (diagonal = positives)."""
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    if n < 2 or S.shape != (n, n):
        raise ValueError("in-batch loss needs a square score matrix with N >= 2")
    diag = np.diag(S)
    loss = float(np.sum(logsumexp(S, axis=1) - diag + logsumexp(S, axis=0) - diag) / n)
    eye = np.eye(n)
    grad = (_softmax(S, axis=1) - eye + _softmax(S, axis=0) - eye) / n
    return loss, grad


def mmclip_loss_from_scores(s_pos: float, s_neg) -> float:
    """-ln( e^{s+} / (e^{s+} + sum_i e^{s_i-}) ), log-sum-exp stabilised."""
    s_neg = np.atleast_1d(np.asarray(s_neg, dtype=float))
    if s_neg.size < 1:
        raise ValueError("MMCLIP needs at least one negative")
    # written on d_i = s_i- - s+ so a dominant positive keeps full precision
    d = s_neg - s_pos
    top = float(np.max(d))
    if top <= 0.0:
        return math.log1p(float(np.sum(np.exp(d))))
    return top + math.log(math.exp(-top) + float(np.sum(np.exp(d - top))))


def mmclip_gradients(s_pos: float, s_neg) -> tuple[float, np.ndarray]:
    """(dL/ds+, dL/ds_i-) in the closed form of the MMCLIP loss."""
    s_neg = np.atleast_1d(np.asarray(s_neg, dtype=float))
    m = max(float(s_pos), float(np.max(s_neg)))
    e_pos = math.exp(s_pos - m)
    e_neg = np.exp(s_neg - m)
    z = e_pos + float(np.sum(e_neg))
    return -float(np.sum(e_neg)) / z, e_neg / z


def hybrid_loss_from_scores(S: np.ndarray, neg_scores: list[np.ndarray]) -> tuple[float, np.ndarray, list[np.ndarray]]:
    """In-batch loss whose row softmaxes also include each row's constructed negatives.

    Returns the loss, dL/dS and the per-row gradients for ``neg_scores``.
    """
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    if n < 2 or S.shape != (n, n) or len(neg_scores) != n:
        raise ValueError("hybrid loss needs N >= 2 groups")
    diag = np.diag(S)
    grad = np.zeros_like(S)
    neg_grads = []
    total = 0.0
    for i in range(n):
        row = np.concatenate([S[i], neg_scores[i]])
        total += logsumexp(row) - diag[i]
        p = _softmax(row)
        grad[i] += p[:n]
        grad[i, i] -= 1.0
        neg_grads.append(p[n:] / n)
    total += float(np.sum(logsumexp(S, axis=0) - diag))
    grad += _softmax(S, axis=0) - np.eye(n)
    return float(total / n), grad / n, neg_grads


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------


@dataclass
class InBatch:
    images: np.ndarray  # N x D_img
    texts: np.ndarray  # N x D_text

    def __post_init__(self):
        self.images = np.atleast_2d(np.asarray(self.images, dtype=float))
        self.texts = np.atleast_2d(np.asarray(self.texts, dtype=float))
        if self.images.shape[0] < 2 or self.images.shape[0] != self.texts.shape[0]:
            raise ValueError("in-batch needs N >= 2 matched pairs")


@dataclass
class MmclipBatch:
    """One anchor, its positive and N >= 1 negatives of the positive's modality.

    ``modality`` names the negatives: "text" means an image anchor with
    caption candidates, "image" a caption anchor with diagram candidates.
    """

    anchor: np.ndarray
    positive: np.ndarray
    negatives: np.ndarray
    modality: str = "text"

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=float)
        self.positive = np.asarray(self.positive, dtype=float)
        self.negatives = np.atleast_2d(np.asarray(self.negatives, dtype=float))
        if self.negatives.shape[0] < 1:
            raise ValueError("MMCLIP needs at least one negative")
        if self.modality not in ("text", "image"):
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.negatives.shape[1] != self.positive.shape[0]:
            raise ValueError("negatives and positive must share a modality")


@dataclass
class HybridBatch:
    anchors: np.ndarray  # k x D_anchor
    positives: np.ndarray  # k x D_candidate
    negatives: list[np.ndarray]  # k arrays of n_i x D_candidate
    modality: str = "text"

    def __post_init__(self):
        self.anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        self.positives = np.atleast_2d(np.asarray(self.positives, dtype=float))
        self.negatives = [np.atleast_2d(np.asarray(n, dtype=float)) for n in self.negatives]
        if self.anchors.shape[0] < 2 or len(self.negatives) != self.anchors.shape[0]:
            raise ValueError("hybrid batch needs k >= 2 groups")


@dataclass
class Gradients:
    image: np.ndarray
    text: np.ndarray
    logit_scale: float

    @classmethod
    def zeros_like(cls, enc: DualEncoder) -> "Gradients":
        return cls(np.zeros_like(enc.image_weights), np.zeros_like(enc.text_weights), 0.0)

    def add(self, other: "Gradients", weight: float = 1.0) -> None:
        self.image += weight * other.image
        self.text += weight * other.text
        self.logit_scale += weight * other.logit_scale


def _embed_rows(X: np.ndarray, W: np.ndarray):
    Z = X @ W
    norms = np.linalg.norm(Z, axis=1)
    zero = norms == 0.0
    U = Z / np.where(zero, 1.0, norms)[:, None]
    U[zero] = 0.0
    U[zero, 0] = 1.0
    return U, norms, zero


def _normalize_backward(dU, U, norms, zero):
    dZ = (dU - U * np.sum(dU * U, axis=1, keepdims=True)) / np.where(zero, 1.0, norms)[:, None]
    dZ[zero] = 0.0
    return dZ


def _sides(batch, enc: DualEncoder):
    """(anchor features, anchor weights, candidate features, candidate weights, anchor-is-image)."""
    if isinstance(batch, InBatch):
        return batch.images, enc.image_weights, batch.texts, enc.text_weights, True
    if isinstance(batch, MmclipBatch):
        cands = np.vstack([batch.positive[None, :], batch.negatives])
        anchors = batch.anchor[None, :]
    elif isinstance(batch, HybridBatch):
        cands = np.vstack([batch.positives, *batch.negatives])
        anchors = batch.anchors
    else:
        raise TypeError(f"unsupported batch type {type(batch).__name__}")
    if batch.modality == "text":
        return anchors, enc.image_weights, cands, enc.text_weights, True
    return anchors, enc.text_weights, cands, enc.image_weights, False


def _loss_on_scores(batch, S):
    if isinstance(batch, InBatch):
        return inbatch_loss_from_scores(S)
    if isinstance(batch, MmclipBatch):
        s_pos, s_neg = S[0, 0], S[0, 1:]
        loss = mmclip_loss_from_scores(s_pos, s_neg)
        g_pos, g_neg = mmclip_gradients(s_pos, s_neg)
        return loss, np.concatenate([[g_pos], g_neg])[None, :]
    k = batch.anchors.shape[0]
    sizes = [n.shape[0] for n in batch.negatives]
    offsets = np.concatenate([[k], k + np.cumsum(sizes)])
    negs = [S[i, offsets[i] : offsets[i + 1]] for i in range(k)]
    loss, g_in, g_negs = hybrid_loss_from_scores(S[:, :k], negs)
    G = np.zeros_like(S)
    G[:, :k] = g_in
    for i in range(k):
        G[i, offsets[i] : offsets[i + 1]] = g_negs[i]
    return loss, G


def scores(batch, enc: DualEncoder) -> np.ndarray:
    Xa, Wa, Xc, Wc, _ = _sides(batch, enc)
    Ua, _, _ = _embed_rows(Xa, Wa)
    Uc, _, _ = _embed_rows(Xc, Wc)
    return math.exp(enc.logit_scale) * (Ua @ Uc.T)


def inbatch_loss(batch: InBatch, enc: DualEncoder) -> tuple[float, np.ndarray]:
    S = scores(batch, enc)
    return inbatch_loss_from_scores(S)[0], S


def mmclip_loss(batch: MmclipBatch, enc: DualEncoder) -> tuple[float, float, np.ndarray]:
    """(loss, s+, s-) for one MMCLIP batch of either negative modality."""
    S = scores(batch, enc)
    return mmclip_loss_from_scores(S[0, 0], S[0, 1:]), float(S[0, 0]), S[0, 1:].copy()


def hybrid_loss(batch: HybridBatch, enc: DualEncoder) -> tuple[float, np.ndarray]:
    S = scores(batch, enc)
    return _loss_on_scores(batch, S)[0], S


def loss_value(batch, enc: DualEncoder) -> float:
    return _loss_on_scores(batch, scores(batch, enc))[0]


def backward(batch, enc: DualEncoder) -> tuple[float, Gradients]:
    """Loss and exact gradients w.r.t. both projection matrices and the logit scale."""
    Xa, Wa, Xc, Wc, anchor_is_image = _sides(batch, enc)
    Ua, na, za = _embed_rows(Xa, Wa)
    Uc, nc, zc = _embed_rows(Xc, Wc)
    scale = math.exp(enc.logit_scale)
    S = scale * (Ua @ Uc.T)
    loss, G = _loss_on_scores(batch, S)
    dUa = scale * (G @ Uc)
    dUc = scale * (G.T @ Ua)
    dWa = Xa.T @ _normalize_backward(dUa, Ua, na, za)
    dWc = Xc.T @ _normalize_backward(dUc, Uc, nc, zc)
    d_scale = float(np.sum(G * S))
    if anchor_is_image:
        return loss, Gradients(dWa, dWc, d_scale)
    return loss, Gradients(dWc, dWa, d_scale)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    strategy: str = "mmclip"
    negative_ratio: int = 10
    learning_rate: float = 1e-2
    steps: int = 500
    seed: int = 0
    optimizer: str = "sgd"
    batch_size: int = 8

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not 1 <= self.negative_ratio <= 50:
            raise ValueError(f"negative_ratio must lie in [1, 50], got {self.negative_ratio}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class TrainData:
    """Feature tables, positive (scene id, caption id) pairs and negative groups."""

    image_features: dict[str, np.ndarray]
    text_features: dict[str, np.ndarray]
    pairs: list[tuple[str, str]]
    groups: list[NegativeGroup] = field(default_factory=list)

    def anchor_of(self, group: NegativeGroup) -> str:
        lookup = {c: s for s, c in self.pairs} if group.modality == "text" else dict(self.pairs)
        try:
            return lookup[group.positive]
        except KeyError:
            raise KeyError(f"no paired item for positive {group.positive!r}") from None

    def mmclip_batch(self, group: NegativeGroup, ratio: int) -> MmclipBatch:
        if ratio > group.ratio:
            raise ValueError(f"ratio {ratio} exceeds the {group.ratio} negatives of {group.positive}")
        anchor = self.anchor_of(group)
        if group.modality == "text":
            a, cand = self.image_features, self.text_features
        else:
            a, cand = self.text_features, self.image_features
        negs = np.array([cand[n.item] for n in group.negatives[:ratio]])
        return MmclipBatch(a[anchor], cand[group.positive], negs, group.modality)


@dataclass
class TrainRun:
    config: TrainConfig
    encoder: DualEncoder
    losses: list[float]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        meta = {
            "config": asdict(self.config),
            "seed": self.config.seed,
            "steps": len(self.losses),
            "final_loss": self.final_loss,
            "weights": {
                "file": "weights.bin",
                "image_shape": list(self.encoder.image_weights.shape),
                "text_shape": list(self.encoder.text_weights.shape),
                "layout": "image weights, text weights, logit_scale; little-endian float64, row-major",
            },
        }
        (out / "run.json").write_text(json.dumps(meta, indent=2) + "\n")
        (out / "weights.bin").write_bytes(self.encoder.to_bytes())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "loss"])
        for i, v in enumerate(self.losses):
            w.writerow([i, repr(v)])
        (out / "loss.csv").write_text(buf.getvalue())

    @classmethod
    def load(cls, run_dir) -> "TrainRun":
        run_dir = Path(run_dir)
        meta_path, weight_path = run_dir / "run.json", run_dir / "weights.bin"
        for p in (weight_path, meta_path):
            if not p.exists():
                raise FileNotFoundError(f"missing {p}")
        meta = json.loads(meta_path.read_text())
        ishape, tshape = meta["weights"]["image_shape"], meta["weights"]["text_shape"]
        enc = DualEncoder.from_bytes(weight_path.read_bytes(), ishape[0], tshape[0], ishape[1])
        losses = []
        loss_path = run_dir / "loss.csv"
        if loss_path.exists():
            rows = list(csv.reader(loss_path.read_text().splitlines()))[1:]
            losses = [float(r[1]) for r in rows]
        return cls(TrainConfig(**meta["config"]), enc, losses)


def _hybrid_batches(data: TrainData, groups: list[NegativeGroup], ratio: int):
    """Split a step's groups by modality; singletons fall back to MMCLIP."""
    out = []
    for modality in ("text", "image"):
        part = [g for g in groups if g.modality == modality]
        if len(part) == 1:
            out.append((data.mmclip_batch(part[0], ratio), 1))
        elif part:
            bs = [data.mmclip_batch(g, ratio) for g in part]
            out.append(
                (
                    HybridBatch(
                        np.array([b.anchor for b in bs]),
                        np.array([b.positive for b in bs]),
                        [b.negatives for b in bs],
                        modality,
                    ),
                    len(part),
                )
            )
    return out


def train(data: TrainData, config: TrainConfig, init: DualEncoder | None = None) -> TrainRun:
    """Gradient descent on the configured strategy; deterministic per seed.

    in-batch: random pairs, ``negative_ratio + 1`` per step, so every
    positive sees ``negative_ratio`` in-batch negatives.  mmclip and hybrid:
    ``batch_size`` groups per step taken cyclically in dataset order, each
    truncated to its first ``negative_ratio`` negatives.
    """
    if config.strategy == "in-batch":
        if len(data.pairs) < config.negative_ratio + 1:
            raise ValueError("not enough pairs for the requested in-batch ratio")
    else:
        if not data.groups:
            raise ValueError("empty dataset")
        for g in data.groups:
            if config.negative_ratio > g.ratio:
                raise ValueError(
                    f"negative_ratio {config.negative_ratio} exceeds the {g.ratio} negatives of {g.positive}"
                )
    enc = init.copy() if init is not None else DualEncoder.init(config.seed)
    rng = np.random.default_rng([config.seed, 1])
    velocity = Gradients.zeros_like(enc)
    losses = []
    n_groups = len(data.groups)
    for step in range(config.steps):
        if config.strategy == "in-batch":
            pick = rng.choice(len(data.pairs), size=config.negative_ratio + 1, replace=False)
            pairs = [data.pairs[i] for i in pick]
            batch = InBatch(
                np.array([data.image_features[s] for s, _ in pairs]),
                np.array([data.text_features[c] for _, c in pairs]),
            )
            loss, grad = backward(batch, enc)
        else:
            k = min(config.batch_size, n_groups)
            groups = [data.groups[(step * k + j) % n_groups] for j in range(k)]
            if config.strategy == "mmclip":
                parts = [(data.mmclip_batch(g, config.negative_ratio), 1) for g in groups]
            else:
                parts = _hybrid_batches(data, groups, config.negative_ratio)
            grad = Gradients.zeros_like(enc)
            loss = 0.0
            for batch, weight in parts:
                part_loss, part_grad = backward(batch, enc)
                loss += weight * part_loss / k
                grad.add(part_grad, weight / k)
        losses.append(float(loss))
        if config.optimizer == "sgd-momentum":
            velocity.image = MOMENTUM * velocity.image + grad.image
            velocity.text = MOMENTUM * velocity.text + grad.text
            velocity.logit_scale = MOMENTUM * velocity.logit_scale + grad.logit_scale
            step_grad = velocity
        else:
            step_grad = grad
        enc.image_weights -= config.learning_rate * step_grad.image
        enc.text_weights -= config.learning_rate * step_grad.text
        enc.logit_scale -= config.learning_rate * step_grad.logit_scale
    return TrainRun(config, enc, losses)
