"""Geometric scene representation, measurement, validation and templates.

A :class:`Scene` is an immutable bag of labelled points, shapes built from
those points, relations between shapes and numeric marks.  Every statement
in a valid scene is geometrically true of its coordinates up to a relative
tolerance of ``TOL``.
"""

from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

TOL = 1e-6

SHAPE_KINDS = ("segment", "polygon", "circle")
ATTRIBUTES = (
    "square",
    "rectangle",
    "right-triangle",
    "isosceles-triangle",
    "equilateral-triangle",
)
RELATION_KINDS = ("parallel", "perpendicular", "similar", "congruent", "intersects")
QUANTITIES = ("length", "angle")
TEMPLATES = (
    "triangle-with-cevian",
    "parallel-lines-transversal",
    "quadrilateral-with-diagonal",
    "circle-with-inscribed-triangle",
)

_SEGMENT_RELATIONS = ("parallel", "perpendicular", "intersects")
_POLYGON_RELATIONS = ("similar", "congruent")


class GeometryError(ValueError):
    """Raised for unresolvable references and rejected inputs."""


def format_number(value: float) -> str:
    """Canonical text form of a number: 9 significant digits, positional."""
    text = np.format_float_positional(
        float(value), precision=9, unique=False, fractional=False, trim="k"
    )
    text = text.rstrip(".")
    if text.startswith("-") and float(text) == 0.0:
        text = text[1:]
    return text


def quantize(value: float) -> float:
    """Round to the value that survives a trip through :func:`format_number`."""
    return float(format_number(value)) + 0.0


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Point:
    id: str
    x: float
    y: float

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Shape:
    """A segment (2 vertices), polygon (>=3 vertices) or circle (centre + radius)."""

    kind: str
    vertices: tuple[str, ...]
    attribute: str | None = None
    radius: float | None = None

    @property
    def name(self) -> str:
        return "".join(self.vertices)

    @property
    def ref(self) -> str:
        """Reference string used by relations."""
        return self.name


@dataclass(frozen=True)
class Relation:
    kind: str
    operands: tuple[str, str]


@dataclass(frozen=True)
class NumericMark:
    """A stated length (two labels) or angle in degrees (three labels, vertex in the middle)."""

    target: tuple[str, ...]
    quantity: str
    value: float


@dataclass(frozen=True)
class Scene:
    points: tuple[Point, ...] = ()
    shapes: tuple[Shape, ...] = ()
    relations: tuple[Relation, ...] = ()
    marks: tuple[NumericMark, ...] = ()
    seed: int = 0

    def point(self, label: str) -> Point:
        for p in self.points:
            if p.id == label:
                return p
        raise GeometryError(f"unknown point {label}")

    def coords(self) -> dict[str, np.ndarray]:
        return {p.id: p.xy for p in self.points}

    def find_shape(self, ref: str) -> Shape | None:
        """Resolve a shape reference; segments match in either direction."""
        for s in self.shapes:
            if s.name == ref:
                return s
        for s in self.shapes:
            if s.kind == "segment" and s.name[::-1] == ref:
                return s
        return None

    def to_dict(self) -> dict:
        return {
            "points": [{"id": p.id, "x": p.x, "y": p.y} for p in self.points],
            "shapes": [
                {
                    "kind": s.kind,
                    "vertices": list(s.vertices),
                    "attribute": s.attribute,
                    "radius": s.radius,
                }
                for s in self.shapes
            ],
            "relations": [{"kind": r.kind, "operands": list(r.operands)} for r in self.relations],
            "marks": [
                {"target": list(m.target), "quantity": m.quantity, "value": m.value}
                for m in self.marks
            ],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        return cls(
            points=tuple(Point(p["id"], float(p["x"]), float(p["y"])) for p in data["points"]),
            shapes=tuple(
                Shape(
                    s["kind"],
                    tuple(s["vertices"]),
                    s.get("attribute"),
                    None if s.get("radius") is None else float(s["radius"]),
                )
                for s in data["shapes"]
            ),
            relations=tuple(Relation(r["kind"], tuple(r["operands"])) for r in data["relations"]),
            marks=tuple(
                NumericMark(tuple(m["target"]), m["quantity"], float(m["value"]))
                for m in data["marks"]
            ),
            seed=int(data.get("seed", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Violation:
    code: str
    entity: str
    message: str


# ---------------------------------------------------------------------------
# Measurement
# ---------------------------------------------------------------------------


def _angle_deg(a: np.ndarray, vertex: np.ndarray, c: np.ndarray) -> float:
    u = a - vertex
    v = c - vertex
    nu, nv = math.hypot(*u), math.hypot(*v)
    if nu == 0.0 or nv == 0.0:
        raise GeometryError("angle with a zero-length arm")
    # atan2 of cross/dot is accurate near 0 and 180 where acos is not
    cross = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1]
    return math.degrees(math.atan2(abs(cross), dot))


def measured_quantity(scene: Scene, target: Sequence[str], quantity: str) -> float:
    """Length of a point pair or angle (degrees) of a point triple, from coordinates."""
    coords = scene.coords()
    missing = [t for t in target if t not in coords]
    if missing:
        raise GeometryError(f"unknown point {missing[0]}")
    if quantity == "length":
        if len(target) != 2:
            raise GeometryError("length target needs two points")
        d = coords[target[1]] - coords[target[0]]
        return math.hypot(d[0], d[1])
    if quantity == "angle":
        if len(target) != 3:
            raise GeometryError("angle target needs three points")
        return _angle_deg(coords[target[0]], coords[target[1]], coords[target[2]])
    raise GeometryError(f"unknown quantity {quantity!r}")


def rel_close(a: float, b: float, tol: float = TOL) -> bool:
    return abs(a - b) <= tol * max(abs(a), abs(b))


def polygon_sides(scene: Scene, vertices: Sequence[str]) -> list[float]:
    n = len(vertices)
    return [measured_quantity(scene, (vertices[i], vertices[(i + 1) % n]), "length") for i in range(n)]


def polygon_angles(scene: Scene, vertices: Sequence[str]) -> list[float]:
    n = len(vertices)
    return [
        measured_quantity(scene, (vertices[i - 1], vertices[i], vertices[(i + 1) % n]), "angle")
        for i in range(n)
    ]


def attribute_holds(scene: Scene, vertices: Sequence[str], attribute: str) -> bool:
    sides = polygon_sides(scene, vertices)
    angles = polygon_angles(scene, vertices)
    right = [rel_close(a, 90.0) for a in angles]
    if attribute == "square":
        return len(vertices) == 4 and all(right) and all(rel_close(s, sides[0]) for s in sides)
    if attribute == "rectangle":
        return len(vertices) == 4 and all(right)
    if attribute == "right-triangle":
        return len(vertices) == 3 and any(right)
    if attribute == "isosceles-triangle":
        return len(vertices) == 3 and any(
            rel_close(sides[i], sides[j]) for i in range(3) for j in range(i + 1, 3)
        )
    if attribute == "equilateral-triangle":
        return len(vertices) == 3 and all(rel_close(s, sides[0]) for s in sides)
    raise GeometryError(f"unknown attribute {attribute!r}")


def _direction(scene: Scene, shape: Shape) -> np.ndarray:
    coords = scene.coords()
    return coords[shape.vertices[1]] - coords[shape.vertices[0]]


def _segment_distance(p1, p2, q1, q2) -> float:
    """Minimum distance between closed segments p1p2 and q1q2."""

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    d1, d2 = cross(q1, q2, p1), cross(q1, q2, p2)
    d3, d4 = cross(p1, p2, q1), cross(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4):
        return 0.0

    def point_seg(p, a, b):
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom == 0.0 else min(1.0, max(0.0, float((p - a) @ ab) / denom))
        return float(np.hypot(*(p - (a + t * ab))))

    return min(point_seg(p1, q1, q2), point_seg(p2, q1, q2), point_seg(q1, p1, p2), point_seg(q2, p1, p2))


def relation_residual(scene: Scene, relation: Relation) -> float:
    """How far a relation is from holding, on the same scale as ``TOL`` (0 = exact).

    parallel: |sin| of the angle between the lines; perpendicular: |cos|;
    intersects: segment gap over the longer segment; similar/congruent:
    worst relative mismatch of side ratios and corresponding angles.
    """
    a = scene.find_shape(relation.operands[0])
    b = scene.find_shape(relation.operands[1])
    if a is None or b is None:
        raise GeometryError("unresolved relation operand")
    kind = relation.kind
    if kind in ("parallel", "perpendicular"):
        u, v = _direction(scene, a), _direction(scene, b)
        norm = math.hypot(*u) * math.hypot(*v)
        if kind == "parallel":
            return abs(u[0] * v[1] - u[1] * v[0]) / norm
        return abs(u[0] * v[0] + u[1] * v[1]) / norm
    if kind == "intersects":
        c = scene.coords()
        p1, p2 = c[a.vertices[0]], c[a.vertices[1]]
        q1, q2 = c[b.vertices[0]], c[b.vertices[1]]
        scale = max(np.hypot(*(p2 - p1)), np.hypot(*(q2 - q1)))
        return _segment_distance(p1, p2, q1, q2) / scale
    # polygon correspondence in the written vertex order
    sa, sb = polygon_sides(scene, a.vertices), polygon_sides(scene, b.vertices)
    ratios = [x / y for x, y in zip(sa, sb)]
    ref = 1.0 if kind == "congruent" else ratios[0]
    worst = max(abs(r - ref) / ref for r in ratios)
    for x, y in zip(polygon_angles(scene, a.vertices), polygon_angles(scene, b.vertices)):
        worst = max(worst, abs(x - y) / max(x, y))
    return worst


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _shape_entity(shape: Shape) -> str:
    return f"{shape.kind}:{shape.name}"


def relation_entity(relation: Relation) -> str:
    return f"{relation.kind}:{relation.operands[0]},{relation.operands[1]}"


def mark_entity(mark: NumericMark) -> str:
    return f"mark:{mark.quantity}:{''.join(mark.target)}"


def validate_scene(scene: Scene) -> list[Violation]:
    """Every broken invariant of ``scene``; an empty list means the scene is valid."""
    out: list[Violation] = []

    def bad(code, entity, message):
        out.append(Violation(code, entity, message))

    labels = [p.id for p in scene.points]
    seen: set[str] = set()
    for p in scene.points:
        entity = f"point:{p.id}"
        if not (len(p.id) == 1 and p.id in string.ascii_uppercase):
            bad("bad-label", entity, f"label {p.id!r} is not a single uppercase letter")
        if p.id in seen:
            bad("duplicate-point", entity, f"point {p.id} declared twice")
        seen.add(p.id)
        if not (math.isfinite(p.x) and math.isfinite(p.y)):
            bad("non-finite", entity, f"point {p.id} has non-finite coordinates")
    if sorted(seen) != list(string.ascii_uppercase[: len(seen)]):
        bad("labels-not-prefix", "scene", "labels must be a contiguous prefix of A..Z")
    geometric_ok = not out

    shape_ok: dict[int, bool] = {}
    for idx, s in enumerate(scene.shapes):
        entity = _shape_entity(s)
        ok = True
        unknown = [v for v in s.vertices if v not in seen]
        for v in unknown:
            bad("unknown-point", entity, f"unknown point {v}")
            ok = False
        if s.kind not in SHAPE_KINDS:
            bad("bad-kind", entity, f"unknown shape kind {s.kind!r}")
            ok = False
        elif s.kind == "segment" and len(s.vertices) != 2:
            bad("bad-arity", entity, "segment needs exactly two points")
            ok = False
        elif s.kind == "polygon" and len(s.vertices) < 3:
            bad("bad-arity", entity, "polygon needs at least three points")
            ok = False
        elif s.kind == "circle":
            if len(s.vertices) != 1:
                bad("bad-arity", entity, "circle needs exactly one centre point")
                ok = False
            if s.radius is None or not math.isfinite(s.radius) or s.radius <= 0:
                bad("bad-radius", entity, "circle radius must be positive and finite")
                ok = False
        if ok and len(set(s.vertices)) != len(s.vertices):
            bad("degenerate-shape", entity, "repeated vertex")
            ok = False
        if ok and geometric_ok and s.kind in ("segment", "polygon"):
            c = scene.coords()
            n = len(s.vertices)
            pairs = [(s.vertices[0], s.vertices[1])] if s.kind == "segment" else [
                (s.vertices[i], s.vertices[(i + 1) % n]) for i in range(n)
            ]
            if any(np.array_equal(c[u], c[v]) for u, v in pairs):
                bad("degenerate-shape", entity, "coincident consecutive vertices")
                ok = False
        if s.attribute is not None and s.kind != "circle":
            if s.attribute not in ATTRIBUTES:
                bad("bad-attribute", entity, f"unknown attribute {s.attribute!r}")
                ok = False
            else:
                need = 4 if s.attribute in ("square", "rectangle") else 3
                if s.kind != "polygon" or len(s.vertices) != need:
                    bad("attribute-kind", entity, f"{s.attribute} needs a {need}-vertex polygon")
                    ok = False
                elif ok and geometric_ok and not attribute_holds(scene, s.vertices, s.attribute):
                    bad("attribute-inconsistent", entity, f"{s.name} is not a {s.attribute}")
        elif s.attribute is not None:
            bad("attribute-kind", entity, "circles carry no attribute")
        shape_ok[idx] = ok

    for r in scene.relations:
        entity = relation_entity(r)
        if r.kind not in RELATION_KINDS:
            bad("bad-kind", entity, f"unknown relation {r.kind!r}")
            continue
        shapes = [scene.find_shape(o) for o in r.operands]
        if any(s is None for s in shapes):
            for o, s in zip(r.operands, shapes):
                if s is None:
                    bad("unknown-shape", entity, f"unknown shape {o}")
            continue
        a, b = shapes
        if a is b:
            bad("degenerate-relation", entity, "a shape cannot be related to itself")
            continue
        if r.kind in _SEGMENT_RELATIONS and not (a.kind == b.kind == "segment"):
            bad("relation-operands", entity, f"{r.kind} needs two segments")
            continue
        if r.kind in _POLYGON_RELATIONS and not (
            a.kind == b.kind == "polygon" and len(a.vertices) == len(b.vertices)
        ):
            bad("relation-operands", entity, f"{r.kind} needs polygons of equal vertex count")
            continue
        if not (geometric_ok and shape_ok[scene.shapes.index(a)] and shape_ok[scene.shapes.index(b)]):
            continue
        if relation_residual(scene, r) > TOL:
            bad("relation-false", entity, f"{r.kind} does not hold")

    for m in scene.marks:
        entity = mark_entity(m)
        if m.quantity not in QUANTITIES:
            bad("bad-mark", entity, f"unknown quantity {m.quantity!r}")
            continue
        need = 2 if m.quantity == "length" else 3
        if len(m.target) != need or any(t not in seen for t in m.target):
            bad("bad-mark", entity, "mark target does not resolve")
            continue
        if not math.isfinite(m.value):
            bad("non-finite", entity, "mark value is not finite")
            continue
        if m.quantity == "angle" and not (0.0 < m.value < 180.0):
            bad("mark-range", entity, "angle marks must lie in (0, 180)")
            continue
        if m.quantity == "length" and m.value <= 0.0:
            bad("mark-range", entity, "length marks must be positive")
            continue
        if not geometric_ok:
            continue
        try:
            actual = measured_quantity(scene, m.target, m.quantity)
        except GeometryError as exc:
            bad("bad-mark", entity, str(exc))
            continue
        if not rel_close(actual, m.value):
            bad("mark-inconsistent", entity, f"stated {m.value} but measured {actual}")
    return out


# ---------------------------------------------------------------------------
# Canonical ordering and helpers shared with the DSL and perturbations
# ---------------------------------------------------------------------------


def canonical(scene: Scene) -> Scene:
    """Scene with statements in canonical order (does not alter content)."""
    return replace(
        scene,
        points=tuple(sorted(scene.points, key=lambda p: p.id)),
        shapes=tuple(sorted(scene.shapes, key=lambda s: (s.vertices[0] if s.vertices else "", SHAPE_KINDS.index(s.kind) if s.kind in SHAPE_KINDS else 9, s.vertices))),
        relations=tuple(sorted(scene.relations, key=lambda r: (r.kind, r.operands))),
        marks=tuple(sorted(scene.marks, key=lambda m: (m.target, m.quantity))),
    )


def with_coords(scene: Scene, coords: dict[str, Iterable[float]]) -> Scene:
    """Replace point coordinates (quantized) and re-derive every mark value."""
    points = tuple(
        Point(p.id, quantize(coords[p.id][0]), quantize(coords[p.id][1])) if p.id in coords else p
        for p in scene.points
    )
    moved = replace(scene, points=points)
    return refresh_marks(moved)


def refresh_marks(scene: Scene) -> Scene:
    marks = tuple(
        replace(m, value=quantize(measured_quantity(scene, m.target, m.quantity))) for m in scene.marks
    )
    return replace(scene, marks=marks)


def relabel(scene: Scene, mapping: dict[str, str]) -> Scene:
    """Rename labels everywhere (geometry unchanged)."""

    def f(label: str) -> str:
        return mapping.get(label, label)

    def fref(ref: str) -> str:
        return "".join(f(ch) for ch in ref)

    return canonical(
        Scene(
            points=tuple(Point(f(p.id), p.x, p.y) for p in scene.points),
            shapes=tuple(replace(s, vertices=tuple(f(v) for v in s.vertices)) for s in scene.shapes),
            relations=tuple(
                Relation(r.kind, (fref(r.operands[0]), fref(r.operands[1]))) for r in scene.relations
            ),
            marks=tuple(replace(m, target=tuple(f(t) for t in m.target)) for m in scene.marks),
            seed=scene.seed,
        )
    )


def transform(scene: Scene, angle_deg: float = 0.0, shift=(0.0, 0.0), scale: float = 1.0) -> Scene:
    """Rotate about the origin, scale, then translate; radii scale, marks re-derived."""
    t = math.radians(angle_deg)
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    coords = {p.id: scale * (rot @ p.xy) + np.asarray(shift) for p in scene.points}
    out = with_coords(scene, coords)
    shapes = tuple(
        replace(s, radius=quantize(s.radius * scale)) if s.kind == "circle" else s for s in out.shapes
    )
    return replace(out, shapes=shapes)


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------


def _assemble(rng, seed, coords, shapes, relations, marks) -> Scene:
    points = tuple(Point(k, 0.0, 0.0) for k in sorted(coords))
    base = Scene(
        points=points,
        shapes=tuple(shapes),
        relations=tuple(relations),
        marks=tuple(NumericMark(tuple(t), q, 0.0) for t, q in marks),
        seed=seed,
    )
    # place in a random pose; all statements are Euclidean invariants
    angle = float(rng.uniform(0.0, 360.0))
    shift = rng.uniform(-5.0, 5.0, size=2)
    t = math.radians(angle)
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    posed = {k: rot @ np.asarray(v, dtype=float) + shift for k, v in coords.items()}
    return canonical(with_coords(base, posed))


def _triangle_with_cevian(rng, seed):
    L = float(rng.integers(4, 11))
    attr = str(rng.choice(["none", "isosceles-triangle", "right-triangle", "equilateral-triangle"]))
    if attr == "isosceles-triangle":
        ax, h = L / 2, float(rng.integers(3, 9))
    elif attr == "equilateral-triangle":
        ax, h = L / 2, L * math.sqrt(3) / 2
    elif attr == "right-triangle":
        ax = float(rng.uniform(0.25, 0.4)) * L
        h = math.sqrt(ax * (L - ax))
    else:
        ax, h = float(rng.uniform(0.2, 0.8)) * L, float(rng.integers(3, 9))
        if abs(ax - L / 2) < 0.05 * L:
            ax += 0.1 * L
    coords = {"A": (ax, h), "B": (0.0, 0.0), "C": (L, 0.0), "D": (ax, 0.0)}
    shapes = [
        Shape("polygon", ("A", "B", "C"), None if attr == "none" else attr),
        Shape("segment", ("A", "D")),
        Shape("segment", ("B", "C")),
    ]
    relations = [Relation("perpendicular", ("AD", "BC"))]
    marks = [(("B", "C"), "length"), (("A", "D"), "length"), (("A", "B", "C"), "angle")]
    return coords, shapes, relations, marks


def _parallel_lines_transversal(rng, seed):
    L = float(rng.integers(6, 11))
    L2 = float(rng.integers(5, 10))
    h = float(rng.integers(2, 6))
    g = float(rng.uniform(0.25, 0.45)) * L
    phi = math.radians(float(rng.uniform(50.0, 130.0)))
    d = np.array([math.cos(phi), math.sin(phi)])
    cross2 = g + h / math.tan(phi)
    c0 = cross2 - float(rng.uniform(0.2, 0.4)) * L2
    up = (h + float(rng.uniform(1.0, 2.5))) / d[1]
    down = (float(rng.uniform(1.2, 1.8)) * h) / d[1]
    G = np.array([g, 0.0])
    coords = {
        "A": (0.0, 0.0),
        "B": (L, 0.0),
        "C": (c0, h),
        "D": (c0 + L2, h),
        "E": tuple(G + up * d),
        "F": tuple(G - down * d),
        "G": tuple(G),
    }
    shapes = [Shape("segment", ("A", "B")), Shape("segment", ("C", "D")), Shape("segment", ("E", "F"))]
    relations = [
        Relation("parallel", ("AB", "CD")),
        Relation("intersects", ("EF", "AB")),
        Relation("intersects", ("EF", "CD")),
    ]
    marks = [(("A", "B"), "length"), (("C", "D"), "length"), (("B", "G", "E"), "angle")]
    return coords, shapes, relations, marks


def _quadrilateral_with_diagonal(rng, seed):
    attr = str(rng.choice(["square", "rectangle", "none"]))
    w = float(rng.integers(3, 10))
    if attr == "square":
        h, sk = w, 0.0
    elif attr == "rectangle":
        h = float(rng.integers(2, 9))
        if h == w:
            h += 1.0
        sk = 0.0
    else:
        h = float(rng.integers(2, 8))
        sk = float(rng.choice([-1, 1])) * float(rng.uniform(0.5, 2.0))
    coords = {"A": (0.0, 0.0), "B": (w, 0.0), "C": (w + sk, h), "D": (sk, h)}
    shapes = [
        Shape("polygon", ("A", "B", "C", "D"), None if attr == "none" else attr),
        Shape("segment", ("A", "C")),
        Shape("polygon", ("A", "B", "C")),
        Shape("polygon", ("C", "D", "A")),
    ]
    relations = [Relation("congruent", ("ABC", "CDA"))]
    marks = [(("A", "B"), "length"), (("A", "C"), "length"), (("B", "A", "C"), "angle")]
    return coords, shapes, relations, marks


def _circle_with_inscribed_triangle(rng, seed):
    r = float(rng.integers(3, 8))
    beta = math.radians(float(rng.uniform(25.0, 155.0)))
    if abs(math.degrees(beta) - 90.0) < 5.0:
        beta += math.radians(10.0)
    coords = {
        "A": (-r, 0.0),
        "B": (r, 0.0),
        "C": (r * math.cos(beta), r * math.sin(beta)),
        "D": (0.0, 0.0),
        "E": (r * math.cos(beta), 0.0),
    }
    shapes = [
        Shape("circle", ("D",), None, r),
        Shape("polygon", ("A", "B", "C"), "right-triangle"),
        Shape("segment", ("A", "B")),
        Shape("segment", ("C", "E")),
    ]
    relations = [Relation("perpendicular", ("CE", "AB"))]
    marks = [(("A", "B"), "length"), (("C", "A", "B"), "angle"), (("C", "E"), "length")]
    return coords, shapes, relations, marks


_TEMPLATE_BUILDERS = {
    "triangle-with-cevian": _triangle_with_cevian,
    "parallel-lines-transversal": _parallel_lines_transversal,
    "quadrilateral-with-diagonal": _quadrilateral_with_diagonal,
    "circle-with-inscribed-triangle": _circle_with_inscribed_triangle,
}


def random_scene(seed: int, template: str) -> Scene:
    """Deterministic scene for ``(seed, template)``; always passes :func:`validate_scene`."""
    if template not in _TEMPLATE_BUILDERS:
        raise GeometryError(f"unknown template {template!r}")
    rng = np.random.default_rng(seed)
    coords, shapes, relations, marks = _TEMPLATE_BUILDERS[template](rng, seed)
    scene = _assemble(rng, seed, coords, shapes, relations, marks)
    # circle radius is a shape parameter, not derived from coordinates
    return replace(
        scene,
        shapes=tuple(replace(s, radius=quantize(s.radius)) if s.kind == "circle" else s for s in scene.shapes),
    )
