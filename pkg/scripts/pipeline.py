"""End-to-end run through the CLI: gen, three negative families, train, eval, audit.

Builds a training corpus and a held-out corpus under --work so evaluation
never sees training captions.
"""

import argparse
import sys
from pathlib import Path

from geoneg.cli import main as geoneg

FAMILIES = ("rule", "scene", "retrieval")


def run(argv):
    code = geoneg([str(a) for a in argv])
    if code:
        sys.exit(f"geoneg {argv[0]} failed with exit code {code}")


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--work", default="work")
    p.add_argument("-n", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=500)
    args = p.parse_args()

    w = Path(args.work)
    seed = args.seed
    run(["gen", "-n", args.n, "--seed", seed, "--corpus-id", "train", "--out", w / "train"])
    run(["gen", "-n", args.n, "--seed", seed + 1, "--corpus-id", "test", "--out", w / "test"])
    for corpus in ("train", "test"):
        for fam in FAMILIES:
            run(["negatives", "--corpus", w / corpus, "--family", fam, "--seed", seed, "--out", w / corpus / fam])
    run(["train", "--corpus", w / "train", "--negatives", w / "train" / "rule", "--negatives", w / "train" / "scene",
         "--steps", args.steps, "--seed", seed, "--out", w / "run"])
    evals = []
    for fam in FAMILIES:
        evals += ["--negatives", w / "test" / fam]
    run(["eval", "--run", w / "run", "--corpus", w / "test", *evals, "--out", w / "eval"])
    run(["audit", "--train", w / "train", "--test", w / "test", "--seed", seed, "--out", w / "audit"])


if __name__ == "__main__":
    main()
