import math

import numpy as np
import pytest
from hypothesis import settings

from geoneg.geometry import Point, Scene, Shape, NumericMark, Relation, refresh_marks

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

_ACCEPTANCE: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _ACCEPTANCE[number] = (title, rep.outcome, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome, duration = _ACCEPTANCE[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:2d} {title} ({duration:.2f}s)")


# ---------------------------------------------------------------------------
# shared scene builders
# ---------------------------------------------------------------------------


def square_scene(side=1.0, attribute="square", marks=True) -> Scene:
    pts = (Point("A", 0.0, 0.0), Point("B", side, 0.0), Point("C", side, side), Point("D", 0.0, side))
    ms = ()
    if marks:
        ms = tuple(NumericMark(t, "length", side) for t in (("A", "B"), ("B", "C"), ("C", "D"), ("A", "D")))
    return Scene(pts, (Shape("polygon", ("A", "B", "C", "D"), attribute),), (), ms, 0)


def parallel_scene() -> Scene:
    pts = (Point("A", 0.0, 0.0), Point("B", 4.0, 0.0), Point("C", 0.0, 2.0), Point("D", 4.0, 2.0))
    shapes = (Shape("segment", ("A", "B")), Shape("segment", ("C", "D")))
    return refresh_marks(
        Scene(pts, shapes, (Relation("parallel", ("AB", "CD")),), (NumericMark(("A", "B"), "length", 0.0),), 0)
    )


def rigid(scene: Scene, angle_deg: float, shift=(0.0, 0.0), scale: float = 1.0) -> Scene:
    """Unquantized similarity transform (no mark refresh: marks are invariants)."""
    t = math.radians(angle_deg)
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    pts = tuple(Point(p.id, *(scale * (rot @ p.xy) + np.asarray(shift))) for p in scene.points)
    shapes = tuple(
        Shape(s.kind, s.vertices, s.attribute, s.radius * scale if s.radius is not None else None) for s in scene.shapes
    )
    marks = tuple(
        NumericMark(m.target, m.quantity, m.value * scale if m.quantity == "length" else m.value) for m in scene.marks
    )
    return Scene(pts, shapes, scene.relations, marks, scene.seed)
