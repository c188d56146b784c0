"""Negative-ratio sweep on retrieval negatives; writes CSV to stdout or --out."""

import argparse
from pathlib import Path

from geoneg.evaluate import SWEEP_RATIOS, sweep_csv
from geoneg.experiments import sweep_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-n", type=int, default=64)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--out")
    args = p.parse_args()

    text = sweep_csv(sweep_experiment(args.seed, args.n, SWEEP_RATIOS, args.steps))
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")


if __name__ == "__main__":
    main()
