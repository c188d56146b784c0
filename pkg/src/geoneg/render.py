"""Scene -> SVG rendering, plus a pixel-free feature summary of rendered SVG."""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .geometry import Scene, validate_scene

LABEL_OFFSET = 12.0
ARC_RADIUS = 20.0
STROKE = "black"
STROKE_WIDTH = "2"
SVG_NS = "http://www.w3.org/2000/svg"


@dataclass(frozen=True)
class RenderOptions:
    include_numeric_marks: bool = True
    width: int = 512
    height: int = 512
    margin_fraction: float = 0.1

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("canvas dimensions must be positive")
        if not 0.0 <= self.margin_fraction <= 0.4:
            raise ValueError("margin_fraction must lie in [0, 0.4]")


def mark_text(value: float, quantity: str) -> str:
    text = f"{value:.6g}"
    return f"{text}°" if quantity == "angle" else text


def _f(v: float) -> str:
    out = f"{v:.2f}"
    return "0.00" if out == "-0.00" else out


class _Layout:
    """Maps scene coordinates to canvas pixels (y axis flipped)."""

    def __init__(self, scene: Scene, opts: RenderOptions):
        pts = np.array([[p.x, p.y] for p in scene.points], dtype=float)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        coords = scene.coords()
        for s in scene.shapes:
            if s.kind == "circle":
                c = coords[s.vertices[0]]
                lo = np.minimum(lo, c - s.radius)
                hi = np.maximum(hi, c + s.radius)
        extent = hi - lo
        if extent.max() <= 0.0:
            raise ValueError("cannot render a zero-extent scene")
        inner = np.array([opts.width, opts.height]) * (1.0 - 2.0 * opts.margin_fraction)
        with np.errstate(divide="ignore"):
            ratios = np.where(extent > 0, inner / np.where(extent > 0, extent, 1.0), np.inf)
        self.scale = float(ratios.min())
        self.mid = (lo + hi) / 2.0
        self.w, self.h = opts.width, opts.height

    def __call__(self, xy) -> np.ndarray:
        d = (np.asarray(xy, dtype=float) - self.mid) * self.scale
        return np.array([self.w / 2.0 + d[0], self.h / 2.0 - d[1]])


def _stroke_attrs() -> str:
    return f'fill="none" stroke="{STROKE}" stroke-width="{STROKE_WIDTH}"'


def _text(cls: str, ident: str, pos, body: str) -> str:
    return (
        f'<text class="{cls}" data-id="{ident}" x="{_f(pos[0])}" y="{_f(pos[1])}" '
        f'text-anchor="middle" dominant-baseline="central" font-size="16">{body}</text>'
    )


def render(scene: Scene, options: RenderOptions | None = None) -> str:
    """Deterministic SVG for ``scene``.  Marks are emitted last, with class ``mark``."""
    opts = options or RenderOptions()
    problems = validate_scene(scene)
    if problems:
        raise ValueError(f"cannot render invalid scene: {problems[0].message}")
    layout = _Layout(scene, opts)
    px = {p.id: layout(p.xy) for p in scene.points}
    all_centroid = np.mean(list(px.values()), axis=0)
    elements: list[str] = []

    for s in scene.shapes:
        ident = f"{s.kind}:{s.name}"
        if s.kind == "segment":
            a, b = px[s.vertices[0]], px[s.vertices[1]]
            elements.append(
                f'<line class="shape" data-id="{ident}" x1="{_f(a[0])}" y1="{_f(a[1])}" '
                f'x2="{_f(b[0])}" y2="{_f(b[1])}" {_stroke_attrs()}/>'
            )
        elif s.kind == "polygon":
            pts = " ".join(f"{_f(px[v][0])},{_f(px[v][1])}" for v in s.vertices)
            elements.append(f'<polygon class="shape" data-id="{ident}" points="{pts}" {_stroke_attrs()}/>')
        else:
            c = px[s.vertices[0]]
            elements.append(
                f'<circle class="shape" data-id="{ident}" cx="{_f(c[0])}" cy="{_f(c[1])}" '
                f'r="{_f(s.radius * layout.scale)}" {_stroke_attrs()}/>'
            )

    for p in sorted(scene.points, key=lambda p: p.id):
        centres = [
            np.mean([px[v] for v in s.vertices], axis=0)
            for s in scene.shapes
            if p.id in s.vertices
        ]
        away = px[p.id] - (np.mean(centres, axis=0) if centres else all_centroid)
        if np.hypot(*away) < 1e-9:
            away = px[p.id] - all_centroid
        if np.hypot(*away) < 1e-9:
            away = np.array([0.0, -1.0])
        pos = px[p.id] + LABEL_OFFSET * away / np.hypot(*away)
        elements.append(_text("label", f"label:{p.id}", pos, p.id))

    if opts.include_numeric_marks:
        for m in scene.marks:
            ident = f"mark:{m.quantity}:{''.join(m.target)}"
            body = mark_text(m.value, m.quantity)
            if m.quantity == "length":
                a, b = px[m.target[0]], px[m.target[1]]
                mid = (a + b) / 2.0
                normal = np.array([b[1] - a[1], a[0] - b[0]])
                normal /= np.hypot(*normal)
                if normal @ (mid - all_centroid) < 0:
                    normal = -normal
                elements.append(_text("mark", ident, mid + 10.0 * normal, body))
            else:
                a, v, c = (px[t] for t in m.target)
                ua = (a - v) / np.hypot(*(a - v))
                uc = (c - v) / np.hypot(*(c - v))
                p1, p2 = v + ARC_RADIUS * ua, v + ARC_RADIUS * uc
                sweep = 1 if ua[0] * uc[1] - ua[1] * uc[0] > 0 else 0
                elements.append(
                    f'<path class="mark" data-id="{ident}" d="M {_f(p1[0])} {_f(p1[1])} '
                    f'A {_f(ARC_RADIUS)} {_f(ARC_RADIUS)} 0 0 {sweep} {_f(p2[0])} {_f(p2[1])}" '
                    f'{_stroke_attrs()}/>'
                )
                bis = ua + uc
                n = np.hypot(*bis)
                bis = bis / n if n > 1e-9 else np.array([-ua[1], ua[0]])
                elements.append(_text("mark", ident, v + (ARC_RADIUS + 12.0) * bis, body))

    head = (
        f'<svg xmlns="{SVG_NS}" version="1.1" width="{opts.width}" height="{opts.height}" '
        f'viewBox="0 0 {opts.width} {opts.height}">'
    )
    return "\n".join([head, *elements, "</svg>"]) + "\n"


def svg_elements(svg: str) -> list[tuple[str, tuple, str]]:
    """Element-level view of an SVG: (tag, sorted attributes, text) per child."""
    root = _parse(svg)
    return [
        (el.tag.split("}")[-1], tuple(sorted(el.attrib.items())), (el.text or "").strip())
        for el in root
    ]


def _parse(svg: str) -> ET.Element:
    try:
        return ET.fromstring(svg)
    except ET.ParseError as exc:
        raise ValueError(f"malformed SVG: {exc}") from exc


@dataclass
class SvgSummary:
    counts: dict[str, int]
    text_labels: int
    mark_elements: int
    bboxes: list[tuple[str, float, float, float, float]] = field(default_factory=list)
    strokes: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def polygons(self) -> int:
        return self.counts.get("polygon", 0)


def rasterize_features(svg: str) -> SvgSummary:
    """Element counts, per-element pixel bounding boxes and stroke inventory."""
    root = _parse(svg)
    counts: Counter = Counter()
    strokes: Counter = Counter()
    boxes = []
    marks = 0
    for el in root:
        tag = el.tag.split("}")[-1]
        counts[tag] += 1
        a = el.attrib
        if a.get("class") == "mark":
            marks += 1
        if "stroke" in a:
            strokes[(a["stroke"], a.get("stroke-width", "1"))] += 1
        if tag == "line":
            xs = [float(a["x1"]), float(a["x2"])]
            ys = [float(a["y1"]), float(a["y2"])]
        elif tag == "polygon":
            pts = [tuple(map(float, p.split(","))) for p in a["points"].split()]
            xs, ys = [p[0] for p in pts], [p[1] for p in pts]
        elif tag == "circle":
            cx, cy, r = float(a["cx"]), float(a["cy"]), float(a["r"])
            xs, ys = [cx - r, cx + r], [cy - r, cy + r]
        elif tag == "text":
            xs, ys = [float(a["x"])], [float(a["y"])]
        elif tag == "path":
            nums = [float(t) for t in a["d"].replace("M", " ").replace("A", " ").split()]
            xs, ys = [nums[0], nums[-2]], [nums[1], nums[-1]]
        else:
            continue
        boxes.append((tag, min(xs), min(ys), max(xs), max(ys)))
    return SvgSummary(dict(counts), counts.get("text", 0), marks, boxes, dict(strokes))
