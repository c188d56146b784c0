"""Hit@1 evaluation, ratio sweeps, max-similarity audits, contamination filtering, 2-means separation."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .contrastive import TrainConfig, TrainData, train
from .encoder import EmbeddingMatrix, embed
from .negatives import NegativeGroup

EVAL_SET_NAMES = ("random-neg", "retrieval-neg", "rule-neg", "image-neg")
SWEEP_RATIOS = (5, 10, 20, 30, 50)
DEFAULT_THRESHOLDS = (0.9, 0.95, 0.99, 0.995)
CONTAMINATION_CUTOFF = 0.995
KMEANS_RESTARTS = 10
KMEANS_ITERS = 100


# ---------------------------------------------------------------------------
# Hit@1
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalItem:
    anchor: str
    positive: str
    negatives: tuple[str, ...]

    def __post_init__(self):
        if not self.negatives:
            raise ValueError(f"empty candidate pool for {self.positive}")
        if self.positive in self.negatives:
            raise ValueError(f"positive {self.positive} listed among its negatives")


@dataclass
class EvalSet:
    name: str
    items: list[EvalItem]

    def __post_init__(self):
        if self.name not in EVAL_SET_NAMES:
            raise ValueError(f"unknown eval set {self.name!r}")

    @property
    def anchor_modality(self) -> str:
        """Image-negative sets anchor on captions; the rest anchor on diagrams."""
        return "text" if self.name == "image-neg" else "image"

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(
                {"set": self.name, "anchor": it.anchor, "positive": it.positive, "negatives": list(it.negatives)},
                separators=(",", ":"),
            )
            + "\n"
            for it in self.items
        )

    @classmethod
    def from_jsonl(cls, text: str) -> "EvalSet":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows:
            raise ValueError("empty eval set")
        names = {r["set"] for r in rows}
        if len(names) != 1:
            raise ValueError("eval set file mixes set names")
        items = [EvalItem(r["anchor"], r["positive"], tuple(r["negatives"])) for r in rows]
        return cls(names.pop(), items)


def evalset_from_groups(name: str, groups: list[NegativeGroup], anchor_of: Callable[[NegativeGroup], str]) -> EvalSet:
    return EvalSet(name, [EvalItem(anchor_of(g), g.positive, tuple(n.item for n in g.negatives)) for g in groups])


def embedding_table(features: dict[str, np.ndarray], weights: np.ndarray, ids=None) -> EmbeddingMatrix:
    ids = list(features) if ids is None else list(ids)
    rows = embed(np.array([features[i] for i in ids]), weights) if ids else np.zeros((0, weights.shape[1]))
    return EmbeddingMatrix(rows, ids)


def hit_at_1(evalset: EvalSet, anchors: EmbeddingMatrix, candidates: EmbeddingMatrix) -> float:
    """Fraction of items whose positive strictly beats every pool negative; ties miss."""
    if not evalset.items:
        raise ValueError("empty eval set")
    hits = 0
    for it in evalset.items:
        a = anchors.row(it.anchor)
        rows = candidates.rows[[candidates.index(c) for c in (it.positive, *it.negatives)]]
        s = (rows * a).sum(axis=1)
        hits += bool(s[0] > s[1:].max())
    return hits / len(evalset.items)


def evaluate_encoder(evalset: EvalSet, data: TrainData, encoder) -> float:
    """Hit@1 of ``encoder`` with features looked up in ``data``."""
    if evalset.anchor_modality == "image":
        a_feats, a_w, c_feats, c_w = data.image_features, encoder.image_weights, data.text_features, encoder.text_weights
    else:
        a_feats, a_w, c_feats, c_w = data.text_features, encoder.text_weights, data.image_features, encoder.image_weights
    anchor_ids = sorted({it.anchor for it in evalset.items})
    cand_ids = sorted({c for it in evalset.items for c in (it.positive, *it.negatives)})
    for ident in anchor_ids:
        if ident not in a_feats:
            raise KeyError(f"unresolvable anchor id {ident!r}")
    for ident in cand_ids:
        if ident not in c_feats:
            raise KeyError(f"unresolvable candidate id {ident!r}")
    return hit_at_1(evalset, embedding_table(a_feats, a_w, anchor_ids), embedding_table(c_feats, c_w, cand_ids))


# ---------------------------------------------------------------------------
# Ratio sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    ratio: int
    final_loss: float
    hit_at_1: float


def ratio_sweep(
    data: TrainData,
    template: TrainConfig,
    ratios,
    score: Callable[[object], float],
) -> list[SweepRow]:
    """Train once per ratio (same seed) and score each final encoder."""
    ratios = list(ratios)
    if not ratios:
        raise ValueError("no ratios given")
    if len(set(ratios)) != len(ratios):
        raise ValueError(f"duplicate ratio in {ratios}")
    bad = [r for r in ratios if r not in SWEEP_RATIOS]
    if bad:
        raise ValueError(f"ratios must come from {SWEEP_RATIOS}, got {bad}")
    available = min((g.ratio for g in data.groups), default=0)
    if max(ratios) > available:
        raise ValueError(f"insufficient negatives: ratio {max(ratios)} needs more than the {available} available")
    rows = []
    for r in sorted(ratios):
        run = train(data, replace(template, negative_ratio=r))
        rows.append(SweepRow(r, run.final_loss, score(run.encoder)))
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ratio", "final_loss", "hit_at_1"])
    for r in rows:
        w.writerow([r.ratio, repr(r.final_loss), repr(r.hit_at_1)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Similarity audits
# ---------------------------------------------------------------------------


@dataclass
class AuditReport:
    query_ids: list[str]
    max_similarity: np.ndarray
    top5: list[list[tuple[str, float]]]
    thresholds: dict[float, tuple[float, float]]  # t -> (fraction exceeding, fraction at or below)
    removed: list[str] = field(default_factory=list)

    def fraction_below(self, t: float) -> float:
        return self.thresholds[t][1]

    def table_rows(self) -> list[str]:
        return [f"<{t:g} {100.0 * below:.4g}%" for t, (_, below) in sorted(self.thresholds.items())]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "fraction_exceeding", "fraction_below"])
        for t, (above, below) in sorted(self.thresholds.items()):
            w.writerow([repr(t), repr(above), repr(below)])
        return buf.getvalue()


def _max_and_top(queries: EmbeddingMatrix, corpus: EmbeddingMatrix, chunk: int = 1024):
    n = len(queries)
    best = np.empty(n)
    top5 = []
    for lo in range(0, n, chunk):
        sims = queries.rows[lo : lo + chunk] @ corpus.rows.T
        best[lo : lo + chunk] = sims.max(axis=1)
        k = min(5, sims.shape[1])
        idx = np.argsort(-sims, axis=1, kind="stable")[:, :k]
        for row, picks in zip(sims, idx):
            top5.append([(corpus.ids[j], float(row[j])) for j in picks])
    return best, top5


def max_similarity_audit(queries: EmbeddingMatrix, corpus: EmbeddingMatrix, thresholds=DEFAULT_THRESHOLDS) -> AuditReport:
    """Per query, the max (and top-5) cosine over ``corpus``; fractions per threshold."""
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    if len(queries) == 0:
        raise ValueError("no queries")
    best, top5 = _max_and_top(queries, corpus)
    table = {}
    for t in thresholds:
        above = float(np.mean(best > t))
        table[float(t)] = (above, 1.0 - above)
    return AuditReport(list(queries.ids), best, top5, table)


def contamination_filter(
    train_set: EmbeddingMatrix,
    test_set: EmbeddingMatrix,
    cutoff: float = CONTAMINATION_CUTOFF,
    thresholds=DEFAULT_THRESHOLDS,
) -> tuple[EmbeddingMatrix, AuditReport]:
    """Drop train rows whose max similarity to any test row exceeds ``cutoff``.

    The report audits the test items against the filtered train set.
    """
    if len(test_set) == 0:
        raise ValueError("empty test corpus")
    if len(train_set) == 0:
        raise ValueError("empty train corpus")
    train_max, _ = _max_and_top(train_set, test_set)
    keep = [i for i in range(len(train_set)) if not train_max[i] > cutoff]
    removed = [train_set.ids[i] for i in range(len(train_set)) if train_max[i] > cutoff]
    filtered = train_set.subset(keep)
    ts = sorted(set(thresholds) | {cutoff})
    report = max_similarity_audit(test_set, filtered, ts) if keep else AuditReport(
        list(test_set.ids), np.full(len(test_set), -1.0), [[] for _ in test_set.ids], {float(t): (0.0, 1.0) for t in ts}
    )
    report.removed = removed
    return filtered, report


# ---------------------------------------------------------------------------
# 2-means separation
# ---------------------------------------------------------------------------


def kmeans2(X: np.ndarray, seed: int = 0, restarts: int = KMEANS_RESTARTS, iters: int = KMEANS_ITERS) -> np.ndarray:
    """Lloyd 2-means, best inertia over ``restarts`` seeded two-point initialisations."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points")
    rng = np.random.default_rng(seed)
    best_labels, best_inertia = None, np.inf
    for _ in range(restarts):
        centres = X[rng.choice(n, size=2, replace=False)].copy()
        labels = np.full(n, -1)
        for _ in range(iters):
            d = ((X[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2)
            new = np.argmin(d, axis=1)
            if np.array_equal(new, labels):
                break
            labels = new
            for c in range(2):
                if np.any(labels == c):
                    centres[c] = X[labels == c].mean(axis=0)
        inertia = float(((X - centres[labels]) ** 2).sum())
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels


def separation_scores(a: EmbeddingMatrix | np.ndarray, b: EmbeddingMatrix | np.ndarray, seed: int = 0) -> tuple[float, float]:
    """(k-means separation accuracy, natural separation score) of two point sets.

    Points are clustered in a canonical (lexicographic) order, so the scores
    do not depend on which set is passed first.
    """
    A = a.rows if isinstance(a, EmbeddingMatrix) else np.atleast_2d(np.asarray(a, dtype=float))
    B = b.rows if isinstance(b, EmbeddingMatrix) else np.atleast_2d(np.asarray(b, dtype=float))
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("both sets must be nonempty")
    X = np.vstack([A, B])
    group = np.r_[np.zeros(len(A), dtype=int), np.ones(len(B), dtype=int)]
    order = np.lexsort(X.T[::-1])
    labels = np.empty(len(X), dtype=int)
    labels[order] = kmeans2(X[order], seed)
    match = int(np.sum(labels == group))
    ksa = max(match, len(X) - match) / len(X)
    own = 0
    for g in (0, 1):
        counts = np.bincount(labels[group == g], minlength=2)
        own += int(counts.max())
    return ksa, own / len(X)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def hits_csv(hits: dict[str, float]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eval_set", "hit_at_1"])
    for name, v in hits.items():
        w.writerow([name, repr(v)])
    return buf.getvalue()


def markdown_report(
    hits: dict[str, float] | None = None,
    audit: AuditReport | None = None,
    separation: tuple[float, float] | None = None,
) -> str:
    lines = ["# Evaluation report", ""]
    if hits:
        lines += ["## Hit@1", "", "| eval set | Hit@1 |", "|---|---|"]
        lines += [f"| {k} | {v:.4f} |" for k, v in hits.items()]
        lines.append("")
    if audit is not None:
        lines += ["## Max-similarity audit", "", "| threshold | exceeding | below |", "|---|---|---|"]
        for t, (above, below) in sorted(audit.thresholds.items()):
            lines.append(f"| {t:g} | {100 * above:.2f}% | {100 * below:.2f}% |")
        lines += ["", f"Removed train items: {len(audit.removed)}", ""]
    if separation is not None:
        lines += [
            "## Separation",
            "",
            f"- k-means separation accuracy: {separation[0]:.4f}",
            f"- natural separation score: {separation[1]:.4f}",
            "",
        ]
    return "\n".join(lines)


def write_text(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)
