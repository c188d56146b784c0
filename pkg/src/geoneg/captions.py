"""Template captions whose facts are exactly the scene's facts."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .geometry import Scene, canonical, validate_scene

FACT_KINDS = ("shape", "relation", "mark", "ordering")

_ATTRIBUTE_PHRASE = {
    "square": "a square",
    "rectangle": "a rectangle",
    "right-triangle": "a right triangle",
    "isosceles-triangle": "an isosceles triangle",
    "equilateral-triangle": "an equilateral triangle",
}
_RELATION_PHRASE = {
    "parallel": "is parallel to",
    "perpendicular": "is perpendicular to",
    "similar": "is similar to",
    "congruent": "is congruent to",
    "intersects": "intersects",
}


@dataclass(frozen=True)
class Fact:
    """One caption fact.  ``payload`` is a tuple of (key, value) pairs."""

    kind: str
    payload: tuple

    def get(self, key, default=None):
        return dict(self.payload).get(key, default)

    def replace(self, **changes) -> "Fact":
        d = dict(self.payload)
        d.update(changes)
        return Fact(self.kind, tuple(d.items()))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "payload": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.payload}}

    @classmethod
    def from_dict(cls, data: dict) -> "Fact":
        return cls(
            data["kind"],
            tuple((k, tuple(v) if isinstance(v, list) else v) for k, v in data["payload"].items()),
        )


@dataclass(frozen=True)
class Caption:
    facts: tuple[Fact, ...]

    @property
    def text(self) -> str:
        return render_text(self.facts)

    def to_dict(self, ident: str, scene_id: str) -> dict:
        return {
            "id": ident,
            "scene_id": scene_id,
            "text": self.text,
            "facts": [f.to_dict() for f in self.facts],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Caption":
        return cls(tuple(Fact.from_dict(f) for f in data["facts"]))


def format_value(value: float) -> str:
    return f"{value:.6g}"


def _noun(n: int) -> str:
    return {3: "triangle", 4: "quadrilateral"}.get(n, "polygon")


def render_text(facts) -> str:
    """Sentences for ``facts`` joined with "; ".

    Polygon names come from their ordering facts, so the ordering facts
    contribute no sentence of their own.
    """
    order = {f.get("polygon"): f.get("order") for f in facts if f.kind == "ordering"}

    def pname(idx) -> str:
        return "".join(order[idx])

    sentences = []
    for f in facts:
        if f.kind == "shape":
            shape = f.get("shape")
            if shape == "segment":
                sentences.append(f"segment {f.get('name')}")
            elif shape == "circle":
                sentences.append(
                    f"circle with center {f.get('name')} and radius {format_value(f.get('radius'))}"
                )
            else:
                name = pname(f.get("polygon"))
                noun = _noun(len(name))
                attr = f.get("attribute")
                if attr:
                    sentences.append(f"{noun} {name} is {_ATTRIBUTE_PHRASE[attr]}")
                else:
                    sentences.append(f"{noun} {name}")
        elif f.kind == "relation":
            a, b = f.get("operands")
            if isinstance(a, int):
                a, b = pname(a), pname(b)
                a, b = f"{_noun(len(a))} {a}", f"{_noun(len(b))} {b}"
            sentences.append(f"{a} {_RELATION_PHRASE[f.get('relation')]} {b}")
        elif f.kind == "mark":
            target = "".join(f.get("target"))
            value = format_value(f.get("value"))
            if f.get("quantity") == "angle":
                sentences.append(f"angle {target} = {value} degrees")
            else:
                sentences.append(f"{target} = {value}")
    return "; ".join(sentences)


def caption(scene: Scene) -> Caption:
    """Facts for every shape, relation and mark, plus one ordering fact per polygon."""
    problems = validate_scene(scene)
    if problems:
        raise ValueError(f"cannot caption invalid scene: {problems[0].message}")
    s = canonical(scene)
    facts: list[Fact] = []
    polygon_index: dict[str, int] = {}
    for sh in s.shapes:
        if sh.kind == "polygon":
            idx = len(polygon_index)
            polygon_index[sh.name] = idx
            facts.append(Fact("shape", (("shape", "polygon"), ("polygon", idx), ("attribute", sh.attribute))))
            facts.append(Fact("ordering", (("polygon", idx), ("order", sh.vertices))))
        elif sh.kind == "segment":
            facts.append(Fact("shape", (("shape", "segment"), ("name", sh.name))))
        else:
            facts.append(
                Fact("shape", (("shape", "circle"), ("name", sh.vertices[0]), ("radius", sh.radius)))
            )
    for r in s.relations:
        # polygon operands point at their ordering facts
        ops = tuple(polygon_index.get(o, o) for o in r.operands)
        facts.append(Fact("relation", (("relation", r.kind), ("operands", ops))))
    for m in s.marks:
        facts.append(
            Fact("mark", (("quantity", m.quantity), ("target", m.target), ("value", m.value)))
        )
    return Caption(tuple(facts))


def cyclic_equal(a, b) -> bool:
    """True iff ``b`` is a rotation of ``a`` or of its reversal."""
    a, b = tuple(a), tuple(b)
    if len(a) != len(b) or sorted(a) != sorted(b):
        return False
    n = len(a)
    rev = a[::-1]
    return any(b == a[k:] + a[:k] or b == rev[k:] + rev[:k] for k in range(n))


def caption_equals_modulo_cyclic(a: Caption, b: Caption) -> bool:
    """Equal up to replacing polygon vertex orderings by cyclically equal ones."""
    if len(a.facts) != len(b.facts):
        return False
    for fa, fb in zip(a.facts, b.facts):
        if fa.kind != fb.kind:
            return False
        if fa.kind == "ordering":
            if fa.get("polygon") != fb.get("polygon") or not cyclic_equal(fa.get("order"), fb.get("order")):
                return False
        elif fa != fb:
            return False
    return True


def fact_diff(a: Caption, b: Caption) -> tuple[list[Fact], list[Fact]]:
    """Multiset difference: (facts only in ``a``, facts only in ``b``)."""
    rest = list(b.facts)
    removed = []
    for f in a.facts:
        if f in rest:
            rest.remove(f)
        else:
            removed.append(f)
    return removed, rest


def dump_captions(rows) -> str:
    return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in rows)
