import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from geoneg.contrastive import (
    HybridBatch,
    InBatch,
    MmclipBatch,
    TrainConfig,
    TrainData,
    TrainRun,
    backward,
    hybrid_loss_from_scores,
    inbatch_loss,
    inbatch_loss_from_scores,
    loss_value,
    mmclip_gradients,
    mmclip_loss,
    mmclip_loss_from_scores,
    train,
)
from geoneg.encoder import D_IMG, D_TEXT, DualEncoder
from geoneg.negatives import Negative, NegativeGroup

from oracles import central_difference, naive_inbatch, naive_mmclip

scores = st.floats(-30, 30)
score_lists = st.lists(scores, min_size=1, max_size=20)


def unit(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def random_feats(rng, n, d):
    return unit(rng.normal(size=(n, d)))


def test_mmclip_examples():
    assert mmclip_loss_from_scores(0.0, [0.0]) == pytest.approx(math.log(2), rel=1e-15)
    assert mmclip_gradients(0.0, [0.0]) == (-0.5, pytest.approx([0.5]))
    gp, gn = mmclip_gradients(0.0, [0.0, 0.0, 0.0])
    assert gp == pytest.approx(-0.75) and np.allclose(gn, 0.25)
    with pytest.raises(ValueError):
        mmclip_loss_from_scores(0.0, [])


def test_mmclip_goes_to_zero():
    prev = math.inf
    for s in range(0, 60, 5):
        loss = mmclip_loss_from_scores(float(s), [0.0, 1.0, -2.0])
        assert loss < prev
        prev = loss
    assert prev < 1e-20


def test_inbatch_examples():
    loss, _ = inbatch_loss_from_scores(np.array([[10.0, -10.0], [-10.0, 10.0]]))
    # frozen from 2 * log1p(exp(-20))
    assert loss == pytest.approx(4.122307244877116e-09, rel=1e-12)
    with pytest.raises(ValueError):
        inbatch_loss_from_scores(np.zeros((1, 1)))


def test_inbatch_uniform_embeddings():
    enc = DualEncoder.init(0)
    rng = np.random.default_rng(0)
    b = InBatch(np.tile(random_feats(rng, 1, D_IMG), (6, 1)), np.tile(random_feats(rng, 1, D_TEXT), (6, 1)))
    loss, S = inbatch_loss(b, enc)
    assert loss == pytest.approx(2 * math.log(6), rel=1e-12)


def test_extreme_scores_are_finite():
    assert math.isfinite(mmclip_loss_from_scores(1e4, [-1e4, 5e3]))
    loss, g = inbatch_loss_from_scores(np.array([[800.0, -900.0], [1000.0, 700.0]]))
    assert math.isfinite(loss) and np.all(np.isfinite(g))


@given(scores, score_lists)
def test_mmclip_matches_naive(sp, sn):
    assert mmclip_loss_from_scores(sp, sn) == pytest.approx(naive_mmclip(sp, sn), rel=1e-9, abs=1e-12)


@given(arrays(np.float64, (4, 4), elements=scores))
def test_inbatch_matches_naive(S):
    assert inbatch_loss_from_scores(S)[0] == pytest.approx(naive_inbatch(S.tolist()), rel=1e-9, abs=1e-12)


@given(scores, score_lists)
def test_mmclip_nonnegative(sp, sn):
    assert mmclip_loss_from_scores(sp, sn) >= 0.0


@given(st.floats(-10, 10), st.lists(st.floats(-10, 10), min_size=1, max_size=10), st.floats(0.01, 1.0), st.data())
def test_mmclip_monotone(sp, sn, d, data):
    base = mmclip_loss_from_scores(sp, sn)
    assert mmclip_loss_from_scores(sp + d, sn) < base
    i = data.draw(st.integers(0, len(sn) - 1))
    up = list(sn)
    up[i] += d
    assert mmclip_loss_from_scores(sp, up) > base


@given(scores, score_lists)
def test_gradient_sum_identity(sp, sn):
    gp, gn = mmclip_gradients(sp, sn)
    assert abs(gp + float(np.sum(gn))) <= 1e-14


@given(arrays(np.float64, (5, 5), elements=scores), st.permutations(range(5)))
def test_inbatch_permutation_invariant(S, perm):
    p = list(perm)
    assert inbatch_loss_from_scores(S[np.ix_(p, p)])[0] == pytest.approx(inbatch_loss_from_scores(S)[0], rel=1e-12, abs=1e-12)


@given(arrays(np.float64, (3, 3), elements=scores), scores, st.floats(-20, 20))
def test_shift_invariance(S, sp, c):
    sn = S[0]
    assert mmclip_loss_from_scores(sp + c, sn + c) == pytest.approx(mmclip_loss_from_scores(sp, sn), rel=1e-9, abs=1e-9)
    assert inbatch_loss_from_scores(S + c)[0] == pytest.approx(inbatch_loss_from_scores(S)[0], rel=1e-9, abs=1e-9)


def test_hybrid_reduces_to_inbatch_without_extra_negatives():
    rng = np.random.default_rng(1)
    S = rng.normal(size=(4, 4))
    loss, G, _ = hybrid_loss_from_scores(S, [np.zeros(0)] * 4)
    ref, G_ref = inbatch_loss_from_scores(S)
    assert loss == pytest.approx(ref, rel=1e-13)
    assert np.allclose(G, G_ref)


def _fd_check(batch, enc, rng, coords=20):
    _, g = backward(batch, enc)
    for _ in range(coords):
        which = rng.integers(3)
        if which == 2:
            def f():
                return loss_value(batch, enc)

            box = np.array([enc.logit_scale])

            def fl():
                enc.logit_scale = float(box[0])
                return loss_value(batch, enc)

            num = central_difference(fl, box, 0)
            enc.logit_scale = float(box[0])
            ana = g.logit_scale
        else:
            W, G = (enc.image_weights, g.image) if which == 0 else (enc.text_weights, g.text)
            ij = tuple(int(rng.integers(s)) for s in W.shape)
            num = central_difference(lambda: loss_value(batch, enc), W, ij)
            ana = G[ij]
        assert abs(num - ana) / max(abs(num), abs(ana), 1e-6) < 1e-5


@pytest.mark.parametrize("kind", ["in-batch", "text", "image", "hybrid"])
def test_backward_matches_finite_differences(kind):
    rng = np.random.default_rng(7)
    enc = DualEncoder.init(3)
    if kind == "in-batch":
        b = InBatch(random_feats(rng, 4, D_IMG), random_feats(rng, 4, D_TEXT))
    elif kind == "text":
        b = MmclipBatch(random_feats(rng, 1, D_IMG)[0], random_feats(rng, 1, D_TEXT)[0], random_feats(rng, 5, D_TEXT))
    elif kind == "image":
        b = MmclipBatch(random_feats(rng, 1, D_TEXT)[0], random_feats(rng, 1, D_IMG)[0], random_feats(rng, 5, D_IMG), "image")
    else:
        b = HybridBatch(random_feats(rng, 3, D_IMG), random_feats(rng, 3, D_TEXT), [random_feats(rng, 2, D_TEXT) for _ in range(3)])
    _fd_check(b, enc, rng)


def test_indistinguishable_candidates_give_no_signal():
    rng = np.random.default_rng(2)
    enc = DualEncoder.init(1)
    t = random_feats(rng, 1, D_TEXT)[0]
    b = MmclipBatch(random_feats(rng, 1, D_IMG)[0], t, np.tile(t, (4, 1)))
    loss, g = backward(b, enc)
    assert loss == pytest.approx(math.log(5), rel=1e-12)
    assert np.max(np.abs(g.text)) < 1e-12 and np.max(np.abs(g.image)) < 1e-12
    assert abs(g.logit_scale) < 1e-12


def test_mmclip_batch_validation():
    with pytest.raises(ValueError):
        MmclipBatch(np.ones(D_IMG), np.ones(D_TEXT), np.zeros((0, D_TEXT)))
    with pytest.raises(ValueError):
        MmclipBatch(np.ones(D_IMG), np.ones(D_TEXT), np.ones((2, D_IMG)))


def test_mmclip_loss_returns_scores():
    rng = np.random.default_rng(0)
    enc = DualEncoder.init(0)
    b = MmclipBatch(random_feats(rng, 1, D_IMG)[0], random_feats(rng, 1, D_TEXT)[0], random_feats(rng, 3, D_TEXT))
    loss, sp, sn = mmclip_loss(b, enc)
    assert loss == pytest.approx(mmclip_loss_from_scores(sp, sn), rel=1e-15)
    assert sn.shape == (3,)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def toy_data(n=16, ratio=10, seed=0) -> TrainData:
    """Random features are linearly separable in 64/256 dimensions."""
    rng = np.random.default_rng(seed)
    img = {f"i{k}": v for k, v in enumerate(random_feats(rng, n, D_IMG))}
    txt = {f"t{k}": v for k, v in enumerate(random_feats(rng, n, D_TEXT))}
    pairs = [(f"i{k}", f"t{k}") for k in range(n)]
    groups = []
    for k in range(n):
        others = [j for j in range(n) if j != k]
        pick = rng.choice(others, size=ratio, replace=False)
        groups.append(NegativeGroup(f"t{k}", "text", [Negative(f"t{j}", "random", "") for j in pick]))
    return TrainData(img, txt, pairs, groups)


def mean_loss(data, enc, ratio):
    return float(np.mean([loss_value(data.mmclip_batch(g, ratio), enc) for g in data.groups]))


def test_separable_toy_converges():
    data = toy_data()
    run = train(data, TrainConfig("mmclip", 10, 1e-2, 500, seed=0))
    assert mean_loss(data, run.encoder, 10) < 0.1
    assert run.losses[-1] < run.losses[0]
    assert len(run.losses) == 500


@pytest.mark.parametrize("strategy", ["in-batch", "mmclip", "hybrid"])
@pytest.mark.parametrize("optimizer", ["sgd", "sgd-momentum"])
def test_training_is_deterministic(strategy, optimizer):
    data = toy_data()
    cfg = TrainConfig(strategy, 5, 1e-2, 20, seed=3, optimizer=optimizer, batch_size=4)
    a, b = train(data, cfg), train(data, cfg)
    assert a.encoder.to_bytes() == b.encoder.to_bytes()
    assert a.losses == b.losses


def test_hybrid_handles_mixed_modalities():
    data = toy_data()
    groups = list(data.groups)
    groups[0] = NegativeGroup("i0", "image", [Negative(f"i{j}", "random", "") for j in range(1, 6)])
    data = TrainData(data.image_features, data.text_features, data.pairs, groups)
    run = train(data, TrainConfig("hybrid", 5, 1e-2, 10, batch_size=3))
    assert all(math.isfinite(v) for v in run.losses)


@pytest.mark.parametrize(
    "kw", [{"negative_ratio": 0}, {"negative_ratio": 51}, {"strategy": "x"}, {"optimizer": "adam"}, {"learning_rate": 0}, {"steps": 0}]
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_train_preconditions():
    data = toy_data(ratio=5)
    with pytest.raises(ValueError):
        train(data, TrainConfig("mmclip", 6, steps=1))
    empty = TrainData(data.image_features, data.text_features, data.pairs, [])
    with pytest.raises(ValueError):
        train(empty, TrainConfig("mmclip", 5, steps=1))


def test_run_persistence(tmp_path):
    run = train(toy_data(), TrainConfig("mmclip", 5, steps=5))
    run.save(tmp_path)
    assert (tmp_path / "loss.csv").read_text().splitlines()[0] == "step,loss"
    back = TrainRun.load(tmp_path)
    assert back.encoder.to_bytes() == run.encoder.to_bytes()
    assert back.losses == run.losses and back.config == run.config


def test_run_load_names_missing_weights(tmp_path):
    with pytest.raises(FileNotFoundError, match="weights.bin"):
        TrainRun.load(tmp_path)
