import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from geoneg.encoder import (
    ANGLE_SLICE,
    D_EMB,
    D_TEXT,
    LENGTH_SLICE,
    MARK_COUNT,
    DualEncoder,
    EmbeddingMatrix,
    embed,
    fnv1a_64,
    image_descriptor,
    image_features,
    similarity,
    text_features,
    token_bucket,
)
from geoneg.geometry import TEMPLATES, Point, Scene, Shape, random_scene
from geoneg.render import RenderOptions

from conftest import rigid, square_scene

seeds = st.integers(min_value=0, max_value=2**63 - 1)
unit_vecs = arrays(np.float64, 8, elements=st.floats(-1, 1)).filter(lambda v: np.linalg.norm(v) > 1e-3).map(
    lambda v: v / np.linalg.norm(v)
)


def test_fnv1a_reference_values():
    # published FNV-1a 64-bit test vectors
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8


def test_text_features_basics():
    assert np.array_equal(text_features("AB = 5"), text_features("AB = 5"))
    assert token_bucket("5") != token_bucket("10")
    assert not np.array_equal(text_features("AB = 5"), text_features("AB = 10"))
    e1 = np.zeros(D_TEXT)
    e1[0] = 1.0
    assert np.array_equal(text_features(""), e1)
    assert np.linalg.norm(text_features("triangle ABC")) == pytest.approx(1.0, abs=1e-12)


def test_image_features_detect_nonsquare():
    quad = (Shape("polygon", ("A", "B", "C", "D")),)
    sq = square_scene(marks=False)
    bent = tuple(Point("C", 1.3, 1.1) if p.id == "C" else p for p in sq.points)
    a = image_descriptor(Scene(sq.points, quad))
    b = image_descriptor(Scene(bent, quad))
    assert not np.allclose(a[ANGLE_SLICE], b[ANGLE_SLICE])


def test_marks_off_masks_only_mark_count():
    s = random_scene(11, "quadrilateral-with-diagonal")
    on = image_descriptor(s)
    off = image_descriptor(s, RenderOptions(include_numeric_marks=False))
    diff = np.flatnonzero(on != off)
    assert list(diff) == [MARK_COUNT]


@given(seeds, st.sampled_from(TEMPLATES), st.floats(0, 360), st.floats(-20, 20), st.floats(0.1, 10))
def test_image_features_similarity_invariant(seed, template, angle, dx, scale):
    s = random_scene(seed, template)
    moved = rigid(s, angle, (dx, -dx), scale)
    a, b = image_descriptor(s), image_descriptor(moved)
    assert np.max(np.abs(a[ANGLE_SLICE] - b[ANGLE_SLICE])) <= 1e-9
    assert np.max(np.abs(a[LENGTH_SLICE] - b[LENGTH_SLICE])) <= 1e-9
    assert np.max(np.abs(image_features(s) - image_features(moved))) <= 1e-9


def test_rotation_by_30_degrees():
    s = random_scene(3, "triangle-with-cevian")
    a, b = image_descriptor(s), image_descriptor(rigid(s, 30.0))
    assert np.max(np.abs(a - b)) <= 1e-9


def test_embed_examples():
    f = np.zeros(D_EMB)
    f[3] = 1.0
    assert np.array_equal(embed(f, np.eye(D_EMB)), f)
    with pytest.raises(ValueError):
        embed(np.ones(5), np.eye(D_EMB))
    w = np.zeros((4, D_EMB))
    out = embed(np.ones(4), w)
    assert out[0] == 1.0 and np.linalg.norm(out) == 1.0


@given(arrays(np.float64, 16, elements=st.floats(-10, 10)), st.floats(0.01, 100), seeds)
def test_embed_scale_invariant_and_unit(f, k, seed):
    w = np.random.default_rng(seed % 2**32).normal(size=(16, D_EMB))
    a, b = embed(f, w), embed(k * f, w)
    assert abs(np.linalg.norm(a) - 1.0) <= 1e-9
    assert np.allclose(a, b, atol=1e-12)


def test_similarity_examples():
    a = np.array([1.0, 0.0])
    assert similarity(a, a, 0.0) == 1.0
    assert similarity(a, np.array([0.0, 1.0]), 0.0) == 0.0
    assert similarity(a, -a, math.log(2)) == pytest.approx(-2.0, rel=1e-15)


@given(unit_vecs, unit_vecs, st.floats(-3, 3))
def test_similarity_symmetric_bounded(a, b, ls):
    s = similarity(a, b, ls)
    assert s == similarity(b, a, ls)
    assert abs(s) <= math.exp(ls) * (1 + 1e-12)


def test_dual_encoder_bytes_round_trip():
    enc = DualEncoder.init(5)
    back = DualEncoder.from_bytes(enc.to_bytes())
    assert np.array_equal(back.image_weights, enc.image_weights)
    assert np.array_equal(back.text_weights, enc.text_weights)
    assert back.logit_scale == enc.logit_scale == pytest.approx(math.log(1 / 0.07))


def test_embedding_matrix_validation(tmp_path):
    rows = np.eye(3)
    m = EmbeddingMatrix(rows, ["a", "b", "c"])
    with pytest.raises(ValueError):
        EmbeddingMatrix(rows * 2, ["a", "b", "c"])
    with pytest.raises(ValueError):
        EmbeddingMatrix(rows, ["a", "a", "c"])
    for binary in (True, False):
        path = tmp_path / f"m{binary}.emb"
        m.save(path, binary=binary)
        back = EmbeddingMatrix.load(path)
        assert back.ids == m.ids and np.array_equal(back.rows, m.rows)
