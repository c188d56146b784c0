"""Toy dual encoder: fixed feature extractors plus trainable linear projections."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .captions import Caption
from .geometry import ATTRIBUTES, RELATION_KINDS, Scene, polygon_angles, polygon_sides, validate_scene
from .render import RenderOptions

D_TEXT = 256
D_IMG = 64
D_EMB = 32
INIT_LOGIT_SCALE = math.log(1 / 0.07)

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

# image descriptor layout
COUNT_SLICE = slice(0, 5)  # points, segments, polygons, circles, marks
MARK_COUNT = 4
ANGLE_SLICE = slice(5, 21)
LENGTH_SLICE = slice(21, 37)
RELATION_SLICE = slice(37, 42)
ATTRIBUTE_SLICE = slice(42, 48)  # ATTRIBUTES then "none"
BIAS = 63
N_BINS = 16


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def tokenize(text: str) -> list[str]:
    return [t for t in re.split(r"[^0-9a-z]+", text.lower()) if t]


def token_bucket(token: str) -> tuple[int, int]:
    """(bucket, sign) of a token: low byte of the hash picks the bucket, the top bit the sign."""
    h = fnv1a_64(token.encode("utf-8"))
    return h % D_TEXT, (-1 if h >> 63 else 1)


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        out = np.zeros_like(v, dtype=float)
        out[0] = 1.0
        return out
    return v / n


def text_features(text: str | Caption) -> np.ndarray:
    """Signed hashed bag of tokens, L2-normalised (empty text maps to e1)."""
    if isinstance(text, Caption):
        text = text.text
    v = np.zeros(D_TEXT)
    for tok in tokenize(text):
        bucket, sign = token_bucket(tok)
        v[bucket] += sign
    return _unit(v)


def _soft_hist(values, lo: float, hi: float) -> np.ndarray:
    """Linear-interpolation histogram over bin centres; continuous in the values."""
    out = np.zeros(N_BINS)
    width = (hi - lo) / N_BINS
    for v in values:
        t = (v - lo) / width - 0.5
        k = math.floor(t)
        frac = t - k
        if k < 0:
            out[0] += 1.0
        elif k >= N_BINS - 1:
            out[N_BINS - 1] += 1.0
        else:
            out[k] += 1.0 - frac
            out[k + 1] += frac
    return out


def image_descriptor(scene: Scene, options: RenderOptions | None = None) -> np.ndarray:
    """Raw (unnormalised) 64-dim geometric descriptor of a scene."""
    opts = options or RenderOptions()
    if validate_scene(scene):
        raise ValueError("cannot describe an invalid scene")
    d = np.zeros(D_IMG)
    kinds = [s.kind for s in scene.shapes]
    d[0] = len(scene.points)
    d[1] = kinds.count("segment")
    d[2] = kinds.count("polygon")
    d[3] = kinds.count("circle")
    d[MARK_COUNT] = len(scene.marks) if opts.include_numeric_marks else 0.0
    angles, lengths = [], []
    for s in scene.shapes:
        if s.kind == "polygon":
            angles.extend(polygon_angles(scene, s.vertices))
            lengths.extend(polygon_sides(scene, s.vertices))
        elif s.kind == "segment":
            a, b = scene.point(s.vertices[0]).xy, scene.point(s.vertices[1]).xy
            lengths.append(float(np.hypot(*(b - a))))
    d[ANGLE_SLICE] = _soft_hist(angles, 0.0, 180.0)
    if lengths:
        top = max(lengths)
        d[LENGTH_SLICE] = _soft_hist([x / top for x in lengths], 0.0, 1.0)
    for r in scene.relations:
        d[RELATION_SLICE.start + RELATION_KINDS.index(r.kind)] += 1.0
    for s in scene.shapes:
        if s.kind == "polygon":
            slot = ATTRIBUTES.index(s.attribute) if s.attribute else len(ATTRIBUTES)
            d[ATTRIBUTE_SLICE.start + slot] += 1.0
    d[BIAS] = 1.0
    return d


def image_features(scene: Scene, options: RenderOptions | None = None) -> np.ndarray:
    return _unit(image_descriptor(scene, options))


@dataclass(frozen=True)
class Projection:
    weights: np.ndarray  # D_in x D_emb
    logit_scale: float = INIT_LOGIT_SCALE


def embed(features: np.ndarray, projection: Projection | np.ndarray) -> np.ndarray:
    """normalize(features @ W); a zero image maps to e1."""
    w = projection.weights if isinstance(projection, Projection) else projection
    f = np.asarray(features, dtype=float)
    if f.shape[-1] != w.shape[0]:
        raise ValueError(f"feature dimension {f.shape[-1]} does not match projection input {w.shape[0]}")
    z = f @ w
    if z.ndim == 1:
        return _unit(z)
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    zero = norms[:, 0] == 0.0
    out = z / np.where(norms == 0.0, 1.0, norms)
    out[zero] = 0.0
    out[zero, 0] = 1.0
    return out


def similarity(a: np.ndarray, b: np.ndarray, logit_scale: float = 0.0) -> float:
    return math.exp(logit_scale) * float(np.dot(a, b))


@dataclass
class DualEncoder:
    """Image and text projections sharing one trainable logit scale."""

    image_weights: np.ndarray
    text_weights: np.ndarray
    logit_scale: float = INIT_LOGIT_SCALE

    @classmethod
    def init(cls, seed: int, d_img: int = D_IMG, d_text: int = D_TEXT, d_emb: int = D_EMB) -> "DualEncoder":
        rng = np.random.default_rng(seed)
        return cls(
            rng.normal(0.0, 1.0 / math.sqrt(d_img), size=(d_img, d_emb)),
            rng.normal(0.0, 1.0 / math.sqrt(d_text), size=(d_text, d_emb)),
            INIT_LOGIT_SCALE,
        )

    @property
    def image(self) -> Projection:
        return Projection(self.image_weights, self.logit_scale)

    @property
    def text(self) -> Projection:
        return Projection(self.text_weights, self.logit_scale)

    def copy(self) -> "DualEncoder":
        return DualEncoder(self.image_weights.copy(), self.text_weights.copy(), float(self.logit_scale))

    def to_bytes(self) -> bytes:
        flat = np.concatenate([self.image_weights.ravel(), self.text_weights.ravel(), [self.logit_scale]])
        return flat.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, d_img: int = D_IMG, d_text: int = D_TEXT, d_emb: int = D_EMB) -> "DualEncoder":
        flat = np.frombuffer(data, dtype="<f8")
        expected = d_img * d_emb + d_text * d_emb + 1
        if flat.size != expected:
            raise ValueError(f"weight block has {flat.size} values, expected {expected}")
        i = d_img * d_emb
        j = i + d_text * d_emb
        return cls(
            flat[:i].reshape(d_img, d_emb).copy(),
            flat[i:j].reshape(d_text, d_emb).copy(),
            float(flat[j]),
        )


@dataclass
class EmbeddingMatrix:
    rows: np.ndarray
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim != 2:
            raise ValueError("embedding rows must form a matrix")
        if len(self.ids) != self.rows.shape[0]:
            raise ValueError("one id per row required")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ids must be unique")
        if self.rows.shape[0] and np.max(np.abs(np.linalg.norm(self.rows, axis=1) - 1.0)) > 1e-9:
            raise ValueError("embedding rows must be unit-norm")
        self._index = {k: i for i, k in enumerate(self.ids)}

    def __len__(self) -> int:
        return self.rows.shape[0]

    def index(self, ident: str) -> int:
        try:
            return self._index[ident]
        except KeyError:
            raise KeyError(f"unknown id {ident!r}") from None

    def row(self, ident: str) -> np.ndarray:
        return self.rows[self.index(ident)]

    def subset(self, keep: list[int]) -> "EmbeddingMatrix":
        return EmbeddingMatrix(self.rows[keep], [self.ids[i] for i in keep])

    def save(self, path, binary: bool = True) -> None:
        n, dim = self.rows.shape
        header = {"format": "geoneg-embeddings", "n": n, "dim": dim}
        with open(path, "wb") as fh:
            if binary:
                header.update({"encoding": "binary", "dtype": "<f8", "ids": self.ids})
                fh.write((json.dumps(header) + "\n").encode())
                fh.write(self.rows.astype("<f8").tobytes())
            else:
                header["encoding"] = "jsonl"
                fh.write((json.dumps(header) + "\n").encode())
                for ident, row in zip(self.ids, self.rows):
                    fh.write((json.dumps({"id": ident, "vector": row.tolist()}) + "\n").encode())

    @classmethod
    def load(cls, path) -> "EmbeddingMatrix":
        data = Path(path).read_bytes()
        nl = data.index(b"\n")
        header = json.loads(data[:nl])
        n, dim = header["n"], header["dim"]
        if header["encoding"] == "binary":
            rows = np.frombuffer(data[nl + 1 :], dtype="<f8").reshape(n, dim).copy()
            return cls(rows, list(header["ids"]))
        lines = [json.loads(x) for x in data[nl + 1 :].decode().splitlines() if x.strip()]
        rows = np.array([x["vector"] for x in lines], dtype=float).reshape(n, dim)
        return cls(rows, [x["id"] for x in lines])
