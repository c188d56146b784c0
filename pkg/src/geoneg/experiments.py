"""Desk-scale experiments: hard vs random negatives, and the negative-ratio sweep."""

from __future__ import annotations

from dataclasses import dataclass

from .contrastive import TrainConfig, train
from .corpus import build_negatives, generate_corpus, train_data
from .encoder import DualEncoder
from .evaluate import SWEEP_RATIOS, SweepRow, evalset_from_groups, evaluate_encoder, ratio_sweep


@dataclass(frozen=True)
class HardVsRandom:
    seed: int
    untrained: float
    mmclip_hard: float
    inbatch_random: float
    mmclip_final_loss: float
    inbatch_final_loss: float

    @property
    def hard_wins(self) -> bool:
        return self.mmclip_hard > self.untrained and self.mmclip_hard > self.inbatch_random


def _split(seed: int, n: int, family: str, count: int):
    """Train and held-out corpora drawn from independent seed streams."""
    train_items = generate_corpus(n, seed * 2, corpus_id="train")
    test_items = generate_corpus(n, seed * 2 + 1, corpus_id="test")
    train_negs = build_negatives(train_items, family, count, seed)
    test_negs = build_negatives(test_items, family, count, seed + 1)
    return train_data(train_items, [train_negs]), train_data(test_items, [test_negs])


def hard_vs_random(seed: int, n: int = 64, ratio: int = 10, steps: int = 500, lr: float = 1e-2) -> HardVsRandom:
    """MMCLIP on rule negatives vs in-batch on random pairs, scored on held-out rule negatives."""
    train_set, test_set = _split(seed, n, "rule", ratio)
    es = evalset_from_groups("rule-neg", test_set.groups, test_set.anchor_of)
    mm = train(train_set, TrainConfig("mmclip", ratio, lr, steps, seed))
    ib = train(train_set, TrainConfig("in-batch", ratio, lr, steps, seed))
    return HardVsRandom(
        seed,
        evaluate_encoder(es, test_set, DualEncoder.init(seed)),
        evaluate_encoder(es, test_set, mm.encoder),
        evaluate_encoder(es, test_set, ib.encoder),
        mm.final_loss,
        ib.final_loss,
    )


def sweep_experiment(seed: int = 0, n: int = 64, ratios=SWEEP_RATIOS, steps: int = 500, lr: float = 1e-2) -> list[SweepRow]:
    """Ratio sweep with retrieval negatives; Hit@1 on the held-out retrieval set."""
    k = max(ratios)
    train_set, test_set = _split(seed, n, "retrieval", k)
    es = evalset_from_groups("retrieval-neg", test_set.groups, test_set.anchor_of)
    template = TrainConfig("mmclip", min(ratios), lr, steps, seed)
    return ratio_sweep(train_set, template, ratios, lambda enc: evaluate_encoder(es, test_set, enc))
