"""Corpus plumbing: generation, on-disk layout, negative families and feature tables."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .captions import Caption, caption
from .contrastive import TrainData
from .encoder import EmbeddingMatrix, image_features, text_features
from .geometry import TEMPLATES, Scene, random_scene
from .negatives import (
    NegativeGroup,
    NoNegativesError,
    random_negatives,
    retrieval_negatives,
    rule_negatives,
    scene_perturb_negatives,
)
from .render import RenderOptions, render

log = logging.getLogger(__name__)

FAMILIES = ("rule", "scene", "retrieval", "random")
EVAL_SET_OF_FAMILY = {"rule": "rule-neg", "scene": "image-neg", "retrieval": "retrieval-neg", "random": "random-neg"}
MARKS_OFF = RenderOptions(include_numeric_marks=False)


def item_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass(frozen=True)
class CorpusItem:
    id: str
    scene: Scene
    caption: Caption

    @property
    def caption_id(self) -> str:
        return f"{self.id}_cap"


def template_weights(mix: dict[str, float] | None) -> np.ndarray:
    if mix is None:
        return np.full(len(TEMPLATES), 1.0 / len(TEMPLATES))
    unknown = set(mix) - set(TEMPLATES)
    if unknown:
        raise ValueError(f"unknown templates {sorted(unknown)}")
    w = np.array([float(mix.get(t, 0.0)) for t in TEMPLATES])
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("template weights must be nonnegative and not all zero")
    return w / w.sum()


def generate_corpus(n: int, seed: int, mix: dict[str, float] | None = None, corpus_id: str = "corpus") -> list[CorpusItem]:
    if n < 1:
        raise ValueError("n must be at least 1")
    p = template_weights(mix)
    rng = np.random.default_rng(seed)
    items = []
    for i in range(n):
        template = TEMPLATES[int(rng.choice(len(TEMPLATES), p=p))]
        scene = random_scene(int(rng.integers(2**62)), template)
        items.append(CorpusItem(f"{corpus_id}_{i}", scene, caption(scene)))
    return items


def _jsonl(rows) -> str:
    return "".join(json.dumps(r, separators=(",", ":"), ensure_ascii=False) + "\n" for r in rows)


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        raise FileNotFoundError(f"missing {path}")
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def scene_row(ident: str, scene: Scene) -> dict:
    return {"id": ident, **scene.to_dict()}


def write_svgs(out: Path, ident: str, scene: Scene) -> None:
    (out / "svg").mkdir(parents=True, exist_ok=True)
    (out / "svg_nomarks").mkdir(parents=True, exist_ok=True)
    (out / "svg" / f"{ident}.svg").write_text(render(scene))
    (out / "svg_nomarks" / f"{ident}.svg").write_text(render(scene, MARKS_OFF))


def write_corpus(items: list[CorpusItem], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenes.jsonl").write_text(_jsonl(scene_row(it.id, it.scene) for it in items))
    (out / "captions.jsonl").write_text(_jsonl(it.caption.to_dict(it.caption_id, it.id) for it in items))
    for it in items:
        write_svgs(out, it.id, it.scene)


def read_corpus(corpus_dir) -> list[CorpusItem]:
    d = Path(corpus_dir)
    scenes = _read_jsonl(d / "scenes.jsonl")
    caps = {r["scene_id"]: Caption.from_dict(r) for r in _read_jsonl(d / "captions.jsonl")}
    items = []
    for row in scenes:
        ident = row.pop("id")
        scene = Scene.from_dict(row)
        items.append(CorpusItem(ident, scene, caps.get(ident) or caption(scene)))
    return items


# ---------------------------------------------------------------------------
# Negative families
# ---------------------------------------------------------------------------


@dataclass
class NegativeSet:
    family: str
    groups: list[NegativeGroup]
    captions: dict[str, tuple[str, Caption]]  # negative id -> (scene id, caption)
    scenes: dict[str, Scene]  # negative id -> scene
    skipped: int = 0

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "negatives.jsonl").write_text("".join(g.to_json() + "\n" for g in self.groups))
        if self.family == "rule":
            rows = (c.to_dict(nid, sid) for nid, (sid, c) in self.captions.items())
            (out / "neg_captions.jsonl").write_text(_jsonl(rows))
        if self.family == "scene":
            (out / "neg_scenes.jsonl").write_text(_jsonl(scene_row(k, s) for k, s in self.scenes.items()))
            for k, s in self.scenes.items():
                write_svgs(out, k, s)

    @classmethod
    def read(cls, neg_dir) -> "NegativeSet":
        d = Path(neg_dir)
        groups = [NegativeGroup.from_dict(r) for r in _read_jsonl(d / "negatives.jsonl")]
        caps, scenes = {}, {}
        if (d / "neg_captions.jsonl").exists():
            caps = {r["id"]: (r["scene_id"], Caption.from_dict(r)) for r in _read_jsonl(d / "neg_captions.jsonl")}
        if (d / "neg_scenes.jsonl").exists():
            for r in _read_jsonl(d / "neg_scenes.jsonl"):
                scenes[r.pop("id")] = Scene.from_dict(r)
        cats = {n.category for g in groups for n in g.negatives}
        if scenes:
            family = "scene"
        elif caps:
            family = "rule"
        elif cats == {"retrieval"}:
            family = "retrieval"
        else:
            family = "random"
        return cls(family, groups, caps, scenes)


def caption_embeddings(items: list[CorpusItem]) -> EmbeddingMatrix:
    return EmbeddingMatrix(np.array([text_features(it.caption) for it in items]), [it.caption_id for it in items])


def build_negatives(items: list[CorpusItem], family: str, count: int, seed: int) -> NegativeSet:
    """One group per corpus item; items the family cannot serve are skipped and logged.

    Retrieval requests that exceed the corpus are a caller error and raise.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    if count < 1:
        raise ValueError("count must be at least 1")
    out = NegativeSet(family, [], {}, {})
    if family == "retrieval":
        emb = caption_embeddings(items)
        if count >= len(items):
            raise ValueError(f"retrieval k={count} needs a corpus larger than {len(items)} items")
        for i in range(len(items)):
            out.groups.append(retrieval_negatives(i, emb, k=count))
        return out
    all_caps = [it.caption_id for it in items]
    for i, it in enumerate(items):
        s = item_seed(seed, i)
        try:
            if family == "rule":
                g = rule_negatives(it.caption, it.scene, count=count, seed=s, positive_id=it.caption_id)
                for n in g.negatives:
                    out.captions[n.item] = (it.id, n.payload)
            elif family == "scene":
                g = scene_perturb_negatives(it.scene, count=count, seed=s, positive_id=it.id)
                for n in g.negatives:
                    out.scenes[n.item] = n.payload
            else:
                g = random_negatives(it.caption_id, all_caps, count=count, seed=s)
        except (NoNegativesError, ValueError) as exc:
            log.warning("skipping %s: %s", it.id, exc)
            out.skipped += 1
            continue
        out.groups.append(g)
    return out


def train_data(items: list[CorpusItem], negative_sets: list[NegativeSet] = ()) -> TrainData:
    """Feature tables covering the corpus and every negative payload."""
    image_feats = {it.id: image_features(it.scene) for it in items}
    text_feats = {it.caption_id: text_features(it.caption) for it in items}
    groups = []
    for ns in negative_sets:
        for nid, (_, cap) in ns.captions.items():
            text_feats[nid] = text_features(cap)
        for nid, scene in ns.scenes.items():
            image_feats[nid] = image_features(scene)
        groups.extend(ns.groups)
    for g in groups:
        table = text_feats if g.modality == "text" else image_feats
        for n in g.negatives:
            if n.item not in table:
                raise KeyError(f"no features for negative {n.item!r}")
    return TrainData(image_feats, text_feats, [(it.id, it.caption_id) for it in items], groups)
