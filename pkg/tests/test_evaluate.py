import numpy as np
import pytest
from hypothesis import given, strategies as st

from geoneg.contrastive import TrainConfig
from geoneg.encoder import EmbeddingMatrix
from geoneg.evaluate import (
    EvalItem,
    EvalSet,
    contamination_filter,
    hit_at_1,
    kmeans2,
    markdown_report,
    max_similarity_audit,
    ratio_sweep,
    separation_scores,
    sweep_csv,
)

from oracles import brute_max_similarity
from test_contrastive import toy_data


def unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def emb(rows, prefix):
    return EmbeddingMatrix(np.asarray(rows, dtype=float), [f"{prefix}{i}" for i in range(len(rows))])


def test_hit_when_positive_matches_anchor():
    anchors = emb([[1.0, 0.0, 0.0]], "a")
    cands = EmbeddingMatrix(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]), ["p", "n1", "n2"])
    es = EvalSet("rule-neg", [EvalItem("a0", "p", ("n1", "n2"))])
    assert hit_at_1(es, anchors, cands) == 1.0


def test_tie_is_a_miss():
    anchors = emb([[1.0, 0.0]], "a")
    cands = EmbeddingMatrix(np.array([[2**-0.5, 2**-0.5], [2**-0.5, -(2**-0.5)]]), ["p", "n"])
    es = EvalSet("random-neg", [EvalItem("a0", "p", ("n",))])
    assert hit_at_1(es, anchors, cands) == 0.0


def test_unresolvable_id():
    es = EvalSet("rule-neg", [EvalItem("zz", "p", ("n",))])
    with pytest.raises(KeyError):
        hit_at_1(es, emb([[1.0]], "a"), EmbeddingMatrix(np.array([[1.0], [1.0]]), ["p", "n"]))


def test_evalset_invariants():
    with pytest.raises(ValueError):
        EvalItem("a", "p", ())
    with pytest.raises(ValueError):
        EvalItem("a", "p", ("p",))
    with pytest.raises(ValueError):
        EvalSet("hard-neg", [])


def test_evalset_jsonl_round_trip():
    es = EvalSet("image-neg", [EvalItem("t0", "s0", ("s0_neg0", "s0_neg1"))])
    assert EvalSet.from_jsonl(es.to_jsonl()) == es
    assert es.anchor_modality == "text"


@given(st.integers(2, 30), st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_oracle_projection_scores_one(n, d, seed):
    rng = np.random.default_rng(seed)
    rows = unit_rows(rng, n, d)
    m = emb(rows, "x")
    items = [EvalItem(f"x{i}", f"x{i}", tuple(f"x{j}" for j in range(n) if j != i)) for i in range(n)]
    assert hit_at_1(EvalSet("retrieval-neg", items), m, m) == 1.0


def test_trained_beats_untrained_on_toy():
    from geoneg.contrastive import train
    from geoneg.encoder import DualEncoder
    from geoneg.evaluate import evalset_from_groups, evaluate_encoder

    wins = 0
    for seed in range(5):
        data = toy_data(seed=seed)
        es = evalset_from_groups("random-neg", data.groups, data.anchor_of)
        run = train(data, TrainConfig("mmclip", 10, 1e-2, 200, seed=seed))
        wins += evaluate_encoder(es, data, run.encoder) > evaluate_encoder(es, data, DualEncoder.init(seed))
    assert wins == 5


def test_ratio_sweep_format():
    data = toy_data(ratio=10)
    rows = ratio_sweep(data, TrainConfig("mmclip", 5, steps=5), [10, 5], lambda enc: 0.5)
    text = sweep_csv(rows)
    lines = text.splitlines()
    assert lines[0] == "ratio,final_loss,hit_at_1"
    assert [int(l.split(",")[0]) for l in lines[1:]] == [5, 10]


@pytest.mark.parametrize("ratios", [[5, 5], [7], [], [20]])
def test_ratio_sweep_rejects(ratios):
    with pytest.raises(ValueError):
        ratio_sweep(toy_data(ratio=10), TrainConfig("mmclip", 5, steps=1), ratios, lambda enc: 0.0)


def test_audit_self_match_and_orthogonal():
    rng = np.random.default_rng(0)
    corpus = emb(unit_rows(rng, 20, 6), "c")
    rep = max_similarity_audit(EmbeddingMatrix(corpus.rows[:3], ["q0", "q1", "q2"]), corpus, [0.5])
    assert np.allclose(rep.max_similarity, 1.0, atol=1e-9)
    ortho = max_similarity_audit(emb([[0, 0, 1.0]], "q"), emb([[1.0, 0, 0], [0, 1.0, 0]], "c"), [0.1, 0.5])
    assert ortho.max_similarity[0] == 0.0
    assert ortho.fraction_below(0.1) == ortho.fraction_below(0.5) == 1.0


def test_audit_hand_case():
    c = np.sqrt(1 - np.array([0.2, 0.5, 0.9]) ** 2)
    corpus = EmbeddingMatrix(
        np.array([[0.2, c[0], 0.0], [0.5, 0.0, c[1]], [0.9, -c[2], 0.0]]), ["a", "b", "c"]
    )
    rep = max_similarity_audit(emb([[1.0, 0.0, 0.0]], "q"), corpus, [0.85, 0.95])
    assert rep.max_similarity[0] == pytest.approx(0.9)
    assert rep.thresholds[0.85] == (1.0, 0.0)
    assert rep.thresholds[0.95] == (0.0, 1.0)
    assert [i for i, _ in rep.top5[0]] == ["c", "b", "a"]


def test_audit_empty_corpus():
    with pytest.raises(ValueError):
        max_similarity_audit(emb([[1.0]], "q"), EmbeddingMatrix(np.zeros((0, 1)), []))


@given(st.integers(0, 2**32 - 1), st.lists(st.floats(-1, 1), min_size=2, max_size=6, unique=True))
def test_audit_matches_brute_force_and_is_monotone(seed, thresholds):
    rng = np.random.default_rng(seed)
    q, c = unit_rows(rng, 7, 4), unit_rows(rng, 9, 4)
    rep = max_similarity_audit(emb(q, "q"), emb(c, "c"), thresholds)
    assert np.allclose(rep.max_similarity, brute_max_similarity(q.tolist(), c.tolist()), atol=1e-12)
    ts = sorted(rep.thresholds)
    below = [rep.fraction_below(t) for t in ts]
    assert below == sorted(below)
    assert all(0.0 <= b <= 1.0 for b in below)


def test_contamination_exact_duplicate_removed():
    rng = np.random.default_rng(1)
    test = emb(unit_rows(rng, 5, 16), "t")
    train_rows = np.vstack([unit_rows(rng, 30, 16), test.rows[2:3]])
    filtered, rep = contamination_filter(emb(train_rows, "r"), test)
    assert rep.removed == ["r30"]
    assert rep.fraction_below(0.995) == 1.0
    assert "<0.995 100%" in rep.table_rows()


def test_contamination_disjoint_keeps_all():
    rng = np.random.default_rng(2)
    tr, te = unit_rows(rng, 200, 32), unit_rows(rng, 50, 32)
    assert max(brute_max_similarity(te.tolist(), tr.tolist())) < 0.995
    filtered, rep = contamination_filter(emb(tr, "r"), emb(te, "t"))
    assert rep.removed == [] and len(filtered) == 200


@given(st.integers(0, 2**32 - 1), st.floats(0.3, 0.99))
def test_contamination_idempotent(seed, cutoff):
    rng = np.random.default_rng(seed)
    tr, te = emb(unit_rows(rng, 40, 3), "r"), emb(unit_rows(rng, 10, 3), "t")
    once, _ = contamination_filter(tr, te, cutoff)
    if len(once) == 0:
        return
    twice, rep = contamination_filter(once, te, cutoff)
    assert rep.removed == [] and twice.ids == once.ids


def test_contamination_empty_test():
    with pytest.raises(ValueError):
        contamination_filter(emb([[1.0]], "r"), EmbeddingMatrix(np.zeros((0, 1)), []))


def test_separation_antipodal_single_points():
    assert separation_scores(np.array([[1.0, 0.0]]), np.array([[-1.0, 0.0]])) == (1.0, 1.0)


def test_separation_needs_points():
    with pytest.raises(ValueError):
        separation_scores(np.zeros((0, 2)), np.ones((1, 2)))
    with pytest.raises(ValueError):
        kmeans2(np.ones((1, 2)))


@given(st.integers(0, 2**32 - 1), st.integers(1, 15), st.integers(1, 15))
def test_separation_symmetric(seed, na, nb):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(na, 3)), rng.normal(size=(nb, 3)) + 0.5
    assert separation_scores(a, b, seed=1) == separation_scores(b, a, seed=1)


def test_markdown_report_sections():
    text = markdown_report(hits={"rule-neg": 0.5}, separation=(1.0, 0.75))
    assert "| rule-neg | 0.5000 |" in text and "natural separation score: 0.7500" in text
