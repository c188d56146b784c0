"""Hard-negative factories: rule-based captions, scene perturbations, retrieval and random."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .captions import Caption, Fact, caption, caption_equals_modulo_cyclic, cyclic_equal, format_value
from .encoder import EmbeddingMatrix
from .geometry import (
    TOL,
    GeometryError,
    NumericMark,
    Relation,
    Scene,
    Shape,
    attribute_holds,
    canonical,
    measured_quantity,
    quantize,
    rel_close,
    relabel,
    relation_residual,
    validate_scene,
    with_coords,
)
from .render import render

CATEGORIES = ("ordering", "shape-attribute", "relation", "numeric", "retrieval", "scene-perturb", "random")
RULE_CATEGORIES = CATEGORIES[:4]
NUMERIC_FACTORS = (0.5, 0.75, 1.5, 2.0)
DEFAULT_COUNT = 10
BREAK_MARGIN = 10.0

ATTRIBUTE_FLIP = {
    "square": "rectangle",
    "rectangle": "square",
    "right-triangle": "isosceles-triangle",
    "isosceles-triangle": "right-triangle",
    "equilateral-triangle": "isosceles-triangle",
}
RELATION_FLIP = {
    "parallel": "perpendicular",
    "perpendicular": "parallel",
    "intersects": "parallel",
    "similar": "congruent",
    "congruent": "similar",
}


class NoNegativesError(ValueError):
    """No applicable perturbation exists for the input."""


@dataclass(frozen=True)
class Negative:
    item: str
    category: str
    delta: str
    payload: Caption | Scene | None = field(default=None, compare=False)
    edit: dict | None = field(default=None, compare=False)


@dataclass
class NegativeGroup:
    positive: str
    modality: str
    negatives: list[Negative]

    @property
    def ratio(self) -> int:
        return len(self.negatives)

    def to_dict(self) -> dict:
        return {
            "positive_id": self.positive,
            "modality": self.modality,
            "ratio": self.ratio,
            "negatives": [{"id": n.item, "category": n.category, "delta": n.delta} for n in self.negatives],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: dict) -> "NegativeGroup":
        group = cls(
            data["positive_id"],
            data["modality"],
            [Negative(n["id"], n["category"], n["delta"]) for n in data["negatives"]],
        )
        if group.ratio != data["ratio"]:
            raise ValueError("ratio does not match the number of negatives")
        return group


# ---------------------------------------------------------------------------
# Rule-based caption negatives
# ---------------------------------------------------------------------------


def draw_ordering(rng: np.random.Generator, order: tuple[str, ...]) -> tuple[str, ...]:
    """Random permutation of ``order`` that is not cyclically equal to it."""
    while True:
        perm = tuple(order[j] for j in rng.permutation(len(order)))
        if not cyclic_equal(order, perm):
            return perm


def _applicable(facts, category):
    if category == "ordering":
        return [i for i, f in enumerate(facts) if f.kind == "ordering" and len(f.get("order")) >= 4]
    if category == "shape-attribute":
        return [
            i for i, f in enumerate(facts)
            if f.kind == "shape" and f.get("shape") == "polygon" and f.get("attribute") in ATTRIBUTE_FLIP
        ]
    if category == "relation":
        return [i for i, f in enumerate(facts) if f.kind == "relation"]
    if category == "numeric":
        return [i for i, f in enumerate(facts) if f.kind == "mark"]
    return []


def _pick(rng, options):
    return options[0] if len(options) == 1 else options[int(rng.integers(len(options)))]


def perturb_value(rng: np.random.Generator, value: float, quantity: str) -> tuple[float, float]:
    """(factor, new value); angle results outside (0, 180) are re-drawn."""
    while True:
        factor = float(NUMERIC_FACTORS[int(rng.integers(len(NUMERIC_FACTORS)))])
        new = quantize(value * factor)
        if quantity != "angle" or 0.0 < new < 180.0:
            return factor, new


def _names(facts) -> dict:
    return {f.get("polygon"): "".join(f.get("order")) for f in facts if f.kind == "ordering"}


def rule_negatives(
    cap: Caption,
    scene: Scene,
    count: int = DEFAULT_COUNT,
    seed: int = 0,
    positive_id: str = "caption",
) -> NegativeGroup:
    """Caption negatives that each change exactly one fact.

    Categories are taken round-robin over ordering, shape-attribute,
    relation and numeric, skipping categories with no applicable fact.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if caption(scene) != cap:
        raise ValueError("caption was not produced from this scene")
    facts = list(cap.facts)
    cats = [c for c in RULE_CATEGORIES if _applicable(facts, c)]
    if not cats:
        raise NoNegativesError("scene has no perturbable fact")
    rng = np.random.default_rng(seed)
    names = _names(facts)
    negatives = []
    for i in range(count):
        cat = cats[i % len(cats)]
        idx = _pick(rng, _applicable(facts, cat))
        old = facts[idx]
        if cat == "ordering":
            order = old.get("order")
            perm = draw_ordering(rng, order)
            new = old.replace(order=perm)
            delta = f"ordering {''.join(order)} -> {''.join(perm)}"
        elif cat == "shape-attribute":
            to = ATTRIBUTE_FLIP[old.get("attribute")]
            new = old.replace(attribute=to)
            delta = f"{names[old.get('polygon')]}: {old.get('attribute')} -> {to}"
        elif cat == "relation":
            to = RELATION_FLIP[old.get("relation")]
            new = old.replace(relation=to)
            a, b = (names.get(o, o) for o in old.get("operands"))
            delta = f"{a}, {b}: {old.get('relation')} -> {to}"
        else:
            factor, value = perturb_value(rng, old.get("value"), old.get("quantity"))
            new = old.replace(value=value)
            delta = (
                f"{old.get('quantity')} {''.join(old.get('target'))}: "
                f"{format_value(old.get('value'))} -> {format_value(value)} (x{factor:g})"
            )
        neg_facts = list(facts)
        neg_facts[idx] = new
        neg = Caption(tuple(neg_facts))
        assert not caption_equals_modulo_cyclic(cap, neg) and neg.text != cap.text
        negatives.append(
            Negative(f"{positive_id}#rule{i}", cat, delta, neg, {"fact_index": idx, "from": old, "to": new})
        )
    return NegativeGroup(positive_id, "text", negatives)


# ---------------------------------------------------------------------------
# Scene-perturbation (image) negatives
# ---------------------------------------------------------------------------


def _rot(v: np.ndarray, deg: float) -> np.ndarray:
    t = math.radians(deg)
    return np.array([math.cos(t) * v[0] - math.sin(t) * v[1], math.sin(t) * v[0] + math.cos(t) * v[1]])


def _reflect(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (b - a) / np.hypot(*(b - a))
    foot = a + d * float((p - a) @ d)
    return 2 * foot - p


def _moved(scene: Scene, updates: dict[str, np.ndarray], radius_scale: float = 1.0) -> Scene:
    coords = scene.coords()
    coords.update(updates)
    out = with_coords(scene, coords)
    if radius_scale != 1.0:
        out = replace(
            out,
            shapes=tuple(
                replace(s, radius=quantize(s.radius * radius_scale)) if s.kind == "circle" else s
                for s in out.shapes
            ),
        )
    return out


def _relation_candidates(scene: Scene):
    coords = scene.coords()
    for r in scene.relations:
        a, b = scene.find_shape(r.operands[0]), scene.find_shape(r.operands[1])
        for own, other in ((a, b), (b, a)):
            n = len(own.vertices)
            for k, p in enumerate(own.vertices):
                P = coords[p]
                moves = []
                if own.kind == "segment":
                    O = coords[own.vertices[1 - k]]
                    q1, q2 = coords[other.vertices[0]], coords[other.vertices[1]]
                    u = (q2 - q1) / np.hypot(*(q2 - q1))
                    L = np.hypot(*(P - O))
                    moves.append(("reflect", _reflect(P, q1, q2)))
                    for deg in (15.0, -15.0, 30.0, -30.0):
                        moves.append((f"rotate {deg:+g}", O + _rot(P - O, deg)))
                    for s in (0.25, -0.25):
                        moves.append((f"slide {s:+g}", P + s * L * u))
                    moves.append(("shrink", O + 0.4 * (P - O)))
                else:
                    nxt = coords[own.vertices[(k + 1) % n]]
                    e = nxt - P
                    for s in (0.2, -0.2):
                        moves.append((f"along {s:+g}", P + s * e))
                        moves.append((f"across {s:+g}", P + s * np.array([-e[1], e[0]])))
                for how, target in moves:
                    yield r, (a, b), p, how, target


def _try_relation(scene: Scene, rel: Relation, shapes, point: str, how: str, target: np.ndarray):
    moved = _moved(scene, {point: target})
    rels = [x for x in moved.relations if x != rel]
    added = None
    a, b = shapes
    if rel.kind in ("parallel", "perpendicular"):
        probe = Relation("intersects", (a.name, b.name))
        already = any(
            x.kind == "intersects" and {x.operands[0], x.operands[1]} == {a.name, b.name} for x in rels
        )
        if not already and relation_residual(moved, probe) <= TOL:
            rels.append(probe)
            added = probe
    neg = canonical(replace(moved, relations=tuple(rels)))
    if relation_residual(neg, rel) <= BREAK_MARGIN * TOL:
        return None
    if rel.kind == "parallel" and added is None:
        # a broken parallel pair must visibly cross
        return None
    delta = f"{rel.kind} {rel.operands[0]} {rel.operands[1]} broken by moving {point} ({how})"
    if added:
        delta += f"; intersects {added.operands[0]} {added.operands[1]} added"
    edit = {
        "kind": "relation",
        "relation": [rel.kind, *rel.operands],
        "moved": point,
        "added": None if added is None else [added.kind, *added.operands],
    }
    return neg, edit, delta


def _numeric_candidates(scene: Scene):
    for m in scene.marks:
        for factor in NUMERIC_FACTORS:
            new = m.value * factor
            if m.quantity == "angle" and not (0.0 < new < 180.0):
                continue
            yield m, factor


def _try_numeric(scene: Scene, mark: NumericMark, factor: float):
    coords = scene.coords()
    goal = mark.value * factor
    options = []
    if mark.quantity == "length":
        p, q = mark.target
        P, Q = coords[p], coords[q]
        options.append((f"move {q}", {q: P + factor * (Q - P)}, 1.0))
        options.append((f"move {p}", {p: Q + factor * (P - Q)}, 1.0))
        options.append(("scale scene", {k: P + factor * (v - P) for k, v in coords.items()}, factor))
    else:
        p, v, q = mark.target
        V = coords[v]
        turn = goal - mark.value
        for moving in (q, p):
            for sign in (1.0, -1.0):
                target = V + _rot(coords[moving] - V, sign * turn)
                options.append((f"rotate {moving}", {moving: target}, 1.0))
    for how, updates, rscale in options:
        neg = canonical(_moved(scene, updates, rscale))
        if validate_scene(neg):
            continue
        got = next(x for x in neg.marks if x.target == mark.target and x.quantity == mark.quantity)
        if not rel_close(got.value, goal):
            continue
        delta = (
            f"{mark.quantity} {''.join(mark.target)}: {format_value(mark.value)} -> "
            f"{format_value(got.value)} (x{factor:g}, {how})"
        )
        edit = {
            "kind": "numeric",
            "target": list(mark.target),
            "quantity": mark.quantity,
            "old": mark.value,
            "factor": factor,
        }
        return neg, edit, delta
    return None


def _attribute_candidates(scene: Scene):
    coords = scene.coords()
    for s in scene.shapes:
        if s.kind != "polygon" or s.attribute not in ATTRIBUTE_FLIP:
            continue
        new_attr = ATTRIBUTE_FLIP[s.attribute]
        v = s.vertices
        if len(v) == 4:
            for i in range(4):
                a, b, c, d = (v[(i + j) % 4] for j in range(4))
                side = np.hypot(*(coords[b] - coords[a]))
                h = coords[c] - coords[b]
                factors = (0.75, 1.5) if s.attribute == "square" else (side / np.hypot(*h),)
                for f in factors:
                    shift = (f - 1.0) * h
                    yield s, new_attr, f"stretch {c}{d} x{f:.6g}", {c: coords[c] + shift, d: coords[d] + shift}
            continue
        scale = max(np.hypot(*(coords[v[i]] - coords[v[i - 1]])) for i in range(3))
        for k, p in enumerate(v):
            dirs = []
            for other in scene.shapes:
                if other.kind == "segment" and p in other.vertices:
                    q = other.vertices[1 - other.vertices.index(p)]
                    dirs.append((f"along {other.name}", coords[q] - coords[p]))
            opp = coords[v[(k + 2) % 3]] - coords[v[(k + 1) % 3]]
            dirs.append(("normal", np.array([-opp[1], opp[0]])))
            for name, d in dirs:
                u = d / np.hypot(*d)
                for t in _attribute_steps(scene, s, new_attr, p, u, scale):
                    yield s, new_attr, f"move {p} {name} by {t:.6g}", {p: coords[p] + t * u}


def _attribute_steps(scene: Scene, shape: Shape, attr: str, p: str, u: np.ndarray, scale: float):
    base = scene.point(p).xy
    coords = scene.coords()

    def residuals(t):
        c = dict(coords)
        c[p] = base + t * u
        pts = [c[x] for x in shape.vertices]
        sides = [np.hypot(*(pts[(i + 1) % 3] - pts[i])) for i in range(3)]
        if attr == "isosceles-triangle":
            return [sides[0] - sides[1], sides[1] - sides[2], sides[0] - sides[2]]
        out = []
        for i in range(3):
            x, y = pts[i - 1] - pts[i], pts[(i + 1) % 3] - pts[i]
            out.append(float(x @ y) / (np.hypot(*x) * np.hypot(*y) + 1e-300))
        return out

    grid = np.linspace(-0.9 * scale, 0.9 * scale, 181)
    values = np.array([residuals(t) for t in grid])
    roots = []
    for j in range(values.shape[1]):
        col = values[:, j]
        for i in range(len(grid) - 1):
            if np.sign(col[i]) != np.sign(col[i + 1]) and np.isfinite(col[i]) and np.isfinite(col[i + 1]):
                try:
                    roots.append(brentq(lambda t: residuals(t)[j], grid[i], grid[i + 1], xtol=1e-14))
                except ValueError:
                    pass
    steps = [t for t in roots if abs(t) > 1e-3 * scale]
    steps.sort(key=abs)
    steps.extend(f * scale for f in (0.2, -0.2, 0.35, -0.35))
    return steps


def _attribute_changed(positive, negative, vertices, old, new) -> bool:
    # square => rectangle and equilateral => isosceles, so one side of the
    # toggle may legitimately stay true
    if not attribute_holds(negative, vertices, new):
        return False
    return not attribute_holds(positive, vertices, new) or not attribute_holds(negative, vertices, old)


def _try_attribute(scene: Scene, shape: Shape, new_attr: str, how: str, updates):
    moved = _moved(scene, updates)
    shapes = tuple(replace(s, attribute=new_attr) if s == shape else s for s in moved.shapes)
    neg = canonical(replace(moved, shapes=shapes))
    if not _attribute_changed(scene, neg, shape.vertices, shape.attribute, new_attr):
        return None
    delta = f"{shape.name}: {shape.attribute} -> {new_attr} ({how})"
    edit = {"kind": "attribute", "shape": shape.name, "from": shape.attribute, "to": new_attr}
    return neg, edit, delta


def _try_relabel(scene: Scene, p: str, q: str):
    neg = relabel(scene, {p: q, q: p})
    for s in scene.shapes:
        if s.kind == "polygon" and len(s.vertices) >= 4:
            new_order = tuple({p: q, q: p}.get(x, x) for x in s.vertices)
            if new_order != s.vertices and cyclic_equal(s.vertices, new_order):
                return None
    if caption_equals_modulo_cyclic(caption(scene), caption(neg)):
        return None
    return neg, {"kind": "ordering", "swap": [p, q]}, f"labels {p} and {q} swapped"


def verify_scene_edit(positive: Scene, negative: Scene, edit: dict) -> bool:
    """Check a recorded scene edit against the negative's coordinates."""
    kind = edit["kind"]
    if kind == "ordering":
        p, q = edit["swap"]
        return (
            np.array_equal(negative.point(p).xy, positive.point(q).xy)
            and np.array_equal(negative.point(q).xy, positive.point(p).xy)
            and negative == relabel(positive, {p: q, q: p})
        )
    if kind == "relation":
        rk, a, b = edit["relation"]
        rel = Relation(rk, (a, b))
        if rel in negative.relations:
            return False
        if relation_residual(negative, rel) <= BREAK_MARGIN * TOL:
            return False
        if edit["added"] is not None:
            added = Relation(edit["added"][0], tuple(edit["added"][1:]))
            if added not in negative.relations or relation_residual(negative, added) > TOL:
                return False
        return True
    if kind == "numeric":
        target = tuple(edit["target"])
        marks = [m for m in negative.marks if m.target == target and m.quantity == edit["quantity"]]
        if len(marks) != 1:
            return False
        goal = edit["old"] * edit["factor"]
        return rel_close(marks[0].value, goal) and rel_close(
            measured_quantity(negative, target, edit["quantity"]), goal
        )
    if kind == "attribute":
        shape = next((s for s in negative.shapes if s.kind == "polygon" and s.name == edit["shape"]), None)
        return (
            shape is not None
            and shape.attribute == edit["to"]
            and _attribute_changed(positive, negative, shape.vertices, edit["from"], edit["to"])
        )
    return False


def scene_perturb_negatives(
    scene: Scene,
    count: int = DEFAULT_COUNT,
    seed: int = 0,
    positive_id: str = "scene",
) -> NegativeGroup:
    """Valid scenes that each differ from ``scene`` by one structural edit.

    Edit kinds (label swap, relation break, mark change, attribute toggle)
    are visited round-robin; within a kind, candidates are tried in a
    seed-shuffled order and kept only if the result validates, renders
    differently, is new, and its recorded edit checks out.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if validate_scene(scene):
        raise ValueError("positive scene is invalid")
    scene = canonical(scene)
    rng = np.random.default_rng(seed)
    labels = [pt.id for pt in scene.points]

    pools = {
        "ordering": [(_try_relabel, (p, q)) for i, p in enumerate(labels) for q in labels[i + 1 :]],
        "relation": [
            (_try_relation, (r, shapes, p, how, target))
            for r, shapes, p, how, target in _relation_candidates(scene)
        ],
        "numeric": [(_try_numeric, cand) for cand in _numeric_candidates(scene)],
        "attribute": [(_try_attribute, cand) for cand in _attribute_candidates(scene)],
    }
    for name in pools:
        order = rng.permutation(len(pools[name]))
        pools[name] = [pools[name][i] for i in order]

    base_json = scene.to_json()
    base_svg = render(scene)
    seen = {base_json}
    negatives: list[Negative] = []
    cursor = {k: 0 for k in pools}
    kinds = [k for k in pools if pools[k]]
    turn = 0
    while len(negatives) < count and kinds:
        kind = kinds[turn % len(kinds)]
        found = None
        while cursor[kind] < len(pools[kind]) and found is None:
            fn, args = pools[kind][cursor[kind]]
            cursor[kind] += 1
            try:
                res = fn(scene, *args)
            except GeometryError:
                # the move collapsed a mark or shape onto a point
                continue
            if res is None:
                continue
            neg, edit, delta = res
            text = neg.to_json()
            if text in seen or validate_scene(neg) or not verify_scene_edit(scene, neg, edit):
                continue
            if render(neg) == base_svg:
                continue
            found = (neg, edit, delta)
            seen.add(text)
        if found is None:
            kinds.remove(kind)
            continue
        neg, edit, delta = found
        k = len(negatives)
        negatives.append(Negative(f"{positive_id}_neg{k}", "scene-perturb", f"{edit['kind']}: {delta}", neg, edit))
        turn += 1
    if not negatives:
        raise NoNegativesError("no applicable scene edit")
    if len(negatives) < count:
        raise NoNegativesError(f"only {len(negatives)} distinct scene edits available, {count} requested")
    return NegativeGroup(positive_id, "image", negatives)


# ---------------------------------------------------------------------------
# Retrieval and random negatives
# ---------------------------------------------------------------------------


def cosine_to_row(embeddings: EmbeddingMatrix, query_index: int) -> np.ndarray:
    # row-wise multiply-and-sum: identical rows give identical scores
    return (embeddings.rows * embeddings.rows[query_index]).sum(axis=1)


def retrieval_negatives(
    query_index: int,
    embeddings: EmbeddingMatrix,
    k: int = DEFAULT_COUNT,
    sample_from_top: int | None = None,
    seed: int = 0,
) -> NegativeGroup:
    """Exact top-``k`` rows by cosine to the query row, excluding the query.

    Ties go to the smaller row index.  With ``sample_from_top=m`` the ``k``
    negatives are instead drawn uniformly from the top ``m``.
    """
    n = len(embeddings)
    if not 0 <= query_index < n:
        raise IndexError(f"query row {query_index} out of range")
    if not 1 <= k < n:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    sims = cosine_to_row(embeddings, query_index)
    idx = np.arange(n)
    keep = idx != query_index
    order = idx[keep][np.lexsort((idx[keep], -sims[keep]))]
    if sample_from_top is not None:
        if not k <= sample_from_top < n:
            raise ValueError("sample_from_top must lie in [k, n-1]")
        rng = np.random.default_rng(seed)
        order = order[np.sort(rng.choice(sample_from_top, size=k, replace=False))]
    else:
        order = order[:k]
    negatives = [
        Negative(embeddings.ids[j], "retrieval", f"cosine {sims[j]:.6f}") for j in order
    ]
    return NegativeGroup(embeddings.ids[query_index], "text", negatives)


def random_negatives(
    positive: str,
    corpus: list[str],
    count: int = DEFAULT_COUNT,
    seed: int = 0,
    modality: str = "text",
) -> NegativeGroup:
    """Uniform sample without replacement from ``corpus`` minus the positive."""
    pool = [c for c in corpus if c != positive]
    if count < 1 or len(corpus) <= count or len(pool) < count:
        raise ValueError(f"corpus of {len(corpus)} items is too small for {count} negatives")
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(pool), size=count, replace=False)
    return NegativeGroup(positive, modality, [Negative(pool[i], "random", "random sample") for i in pick])
