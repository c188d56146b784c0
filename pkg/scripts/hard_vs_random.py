"""Hard rule negatives (MMCLIP) vs random in-batch negatives, several seeds."""

import argparse

from geoneg.experiments import hard_vs_random


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("-n", type=int, default=64)
    p.add_argument("--ratio", type=int, default=10)
    p.add_argument("--steps", type=int, default=500)
    args = p.parse_args()

    print("seed,untrained,mmclip_hard,inbatch_random,hard_wins")
    wins = 0
    for seed in range(args.seeds):
        r = hard_vs_random(seed, args.n, args.ratio, args.steps)
        wins += r.hard_wins
        print(f"{seed},{r.untrained:.4f},{r.mmclip_hard:.4f},{r.inbatch_random:.4f},{int(r.hard_wins)}")
    print(f"# hard negatives win on {wins}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
