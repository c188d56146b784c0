"""Command-line entry point: gen, negatives, train, eval, audit, sweep.

Exit codes: 0 success, 1 runtime error, 2 usage error.  Logs go to stderr,
results to files and stdout.  ``--config FILE`` supplies flat JSON defaults
that explicit flags override; ``GEONEG_SEED`` is the fallback seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .contrastive import OPTIMIZERS, STRATEGIES, TrainConfig, TrainRun, train
from .corpus import (
    EVAL_SET_OF_FAMILY,
    FAMILIES,
    NegativeSet,
    build_negatives,
    caption_embeddings,
    generate_corpus,
    read_corpus,
    train_data,
    write_corpus,
)
from .evaluate import (
    CONTAMINATION_CUTOFF,
    DEFAULT_THRESHOLDS,
    contamination_filter,
    evalset_from_groups,
    evaluate_encoder,
    hits_csv,
    markdown_report,
    ratio_sweep,
    separation_scores,
    sweep_csv,
    write_text,
)

log = logging.getLogger("geoneg")


class UsageError(Exception):
    pass


@dataclass
class PipelineConfig:
    corpus_dir: str = "corpus"
    out_dir: str = "out"
    seed: int = 0
    template_mix: dict[str, float] = field(default_factory=lambda: {})
    negative_counts: dict[str, int] = field(default_factory=lambda: {"rule": 10, "scene": 10, "retrieval": 10})
    train: TrainConfig = field(default_factory=TrainConfig)
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if self.template_mix:
            w = list(self.template_mix.values())
            if any(v < 0 for v in w) or not any(v > 0 for v in w):
                raise ValueError("template weights must be nonnegative and not all zero")
        for fam, c in self.negative_counts.items():
            if fam not in FAMILIES:
                raise ValueError(f"unknown negative family {fam!r}")
            if c < 1:
                raise ValueError(f"negative count for {fam} must be at least 1")

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        return cls(**json.loads(text))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def default_seed() -> int:
    raw = os.environ.get("GEONEG_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"GEONEG_SEED must be an integer, got {raw!r}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _ratios(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _mix(text: str) -> dict[str, float]:
    out = {}
    for part in text.split(","):
        name, _, w = part.partition("=")
        out[name.strip()] = float(w)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geoneg", description="Geometry hard-negative toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat JSON defaults; flags win")
        sp.add_argument("--seed", type=int)
        return sp

    g = common(sub.add_parser("gen", help="generate a corpus"))
    g.add_argument("-n", type=_positive_int, default=10)
    g.add_argument("--mix", type=_mix, help="template weights, e.g. triangle-with-cevian=2,circle-with-inscribed-triangle=1")
    g.add_argument("--corpus-id", default="corpus")
    g.add_argument("--out", default="corpus")

    n = common(sub.add_parser("negatives", help="build hard negatives for a corpus"))
    n.add_argument("--corpus", default="corpus")
    n.add_argument("--family", choices=FAMILIES, default="rule")
    n.add_argument("--count", type=_positive_int, default=10)
    n.add_argument("--out")

    t = common(sub.add_parser("train", help="train the dual-encoder projections"))
    t.add_argument("--corpus", default="corpus")
    t.add_argument("--negatives", action="append", default=None, help="negatives directory (repeatable)")
    t.add_argument("--strategy", choices=STRATEGIES, default="mmclip")
    t.add_argument("--ratio", type=int, default=10)
    t.add_argument("--lr", type=float, default=1e-2)
    t.add_argument("--steps", type=_positive_int, default=500)
    t.add_argument("--optimizer", choices=OPTIMIZERS, default="sgd")
    t.add_argument("--batch-size", type=_positive_int, default=8)
    t.add_argument("--out", default="run")

    e = common(sub.add_parser("eval", help="Hit@1 of a trained run"))
    e.add_argument("--run", default="run")
    e.add_argument("--corpus", default="corpus")
    e.add_argument("--negatives", action="append", default=None)
    e.add_argument("--out", default="eval")

    a = common(sub.add_parser("audit", help="contamination filter and similarity audit"))
    a.add_argument("--train", default="corpus")
    a.add_argument("--test", required=False)
    a.add_argument("--cutoff", type=float, default=CONTAMINATION_CUTOFF)
    a.add_argument("--thresholds", type=_floats, default=list(DEFAULT_THRESHOLDS))
    a.add_argument("--out", default="audit")

    s = common(sub.add_parser("sweep", help="negative-ratio sweep"))
    s.add_argument("--corpus", default="corpus")
    s.add_argument("--negatives", action="append", default=None)
    s.add_argument("--eval-corpus")
    s.add_argument("--eval-negatives")
    s.add_argument("--ratios", type=_ratios, default=[5, 10, 20, 30, 50])
    s.add_argument("--strategy", choices=STRATEGIES, default="mmclip")
    s.add_argument("--lr", type=float, default=1e-2)
    s.add_argument("--steps", type=_positive_int, default=500)
    s.add_argument("--optimizer", choices=OPTIMIZERS, default="sgd")
    s.add_argument("--batch-size", type=_positive_int, default=8)
    s.add_argument("--out", default="sweep.csv")
    return p


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            cfg = json.loads(Path(cfg_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {cfg_path}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config must be a flat JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = {k for k in cfg if k.replace("-", "_") not in known}
        if unknown:
            parser.error(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = parser.parse_args(argv)
    if args.seed is None:
        try:
            args.seed = default_seed()
        except UsageError as exc:
            parser.error(str(exc))
    return args


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    items = generate_corpus(args.n, args.seed, args.mix, args.corpus_id)
    write_corpus(items, args.out)
    log.info("wrote %d scenes to %s", len(items), args.out)
    return 0


def cmd_negatives(args) -> int:
    items = read_corpus(args.corpus)
    out = args.out or str(Path(args.corpus) / f"negatives_{args.family}")
    ns = build_negatives(items, args.family, args.count, args.seed)
    ns.write(out)
    if ns.skipped:
        log.warning("%d item(s) skipped", ns.skipped)
    log.info("wrote %d %s groups to %s", len(ns.groups), args.family, out)
    return 0


def _train_config(args, ratio: int) -> TrainConfig:
    return TrainConfig(args.strategy, ratio, args.lr, args.steps, args.seed, args.optimizer, args.batch_size)


def cmd_train(args) -> int:
    items = read_corpus(args.corpus)
    sets = [NegativeSet.read(d) for d in (args.negatives or [])]
    data = train_data(items, sets)
    run = train(data, _train_config(args, args.ratio))
    run.save(args.out)
    log.info("final loss %.6f after %d steps", run.final_loss, len(run.losses))
    return 0


def cmd_eval(args) -> int:
    run = TrainRun.load(args.run)
    items = read_corpus(args.corpus)
    if not args.negatives:
        raise UsageError("eval needs at least one --negatives directory")
    sets = [NegativeSet.read(d) for d in args.negatives]
    data = train_data(items, sets)
    hits = {}
    out = Path(args.out)
    for ns in sets:
        name = EVAL_SET_OF_FAMILY[ns.family]
        es = evalset_from_groups(name, ns.groups, data.anchor_of)
        write_text(out / f"{name}.jsonl", es.to_jsonl())
        hits[name] = evaluate_encoder(es, data, run.encoder)
        print(f"{name} Hit@1 {hits[name]:.4f}")
    write_text(out / "hit_at_1.csv", hits_csv(hits))
    write_text(out / "report.md", markdown_report(hits=hits))
    return 0


def cmd_audit(args) -> int:
    train_items = read_corpus(args.train)
    test_items = read_corpus(args.test) if args.test else train_items
    train_emb, test_emb = caption_embeddings(train_items), caption_embeddings(test_items)
    _, report = contamination_filter(train_emb, test_emb, args.cutoff, args.thresholds)
    sep = separation_scores(train_emb, test_emb, seed=args.seed)
    out = Path(args.out)
    write_text(out / "audit.csv", report.to_csv())
    write_text(out / "removed.txt", "".join(r + "\n" for r in report.removed))
    write_text(out / "report.md", markdown_report(audit=report, separation=sep))
    print(f"removed {len(report.removed)} of {len(train_emb)} train items")
    for row in report.table_rows():
        print(row)
    print(f"kmeans_separation_accuracy {sep[0]:.4f}")
    print(f"natural_separation_score {sep[1]:.4f}")
    return 0


def cmd_sweep(args) -> int:
    items = read_corpus(args.corpus)
    sets = [NegativeSet.read(d) for d in (args.negatives or [])]
    data = train_data(items, sets)
    if args.eval_corpus and args.eval_negatives:
        eval_sets = [NegativeSet.read(args.eval_negatives)]
        eval_data = train_data(read_corpus(args.eval_corpus), eval_sets)
    else:
        eval_sets, eval_data = sets, data
    if not eval_sets:
        raise UsageError("sweep needs negatives to evaluate against")
    es = evalset_from_groups(EVAL_SET_OF_FAMILY[eval_sets[0].family], eval_sets[0].groups, eval_data.anchor_of)
    template = _train_config(args, min(args.ratios))
    rows = ratio_sweep(data, template, args.ratios, lambda enc: evaluate_encoder(es, eval_data, enc))
    write_text(args.out, sweep_csv(rows))
    for r in rows:
        print(f"ratio {r.ratio} loss {r.final_loss:.6f} Hit@1 {r.hit_at_1:.4f}")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "negatives": cmd_negatives,
    "train": cmd_train,
    "eval": cmd_eval,
    "audit": cmd_audit,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        log.error("%s", exc)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
