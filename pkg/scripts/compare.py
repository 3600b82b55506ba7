#!/usr/bin/env python3
"""ASYMM against centralized MM, once with the mirrored block schedule
(iterates must coincide) and once with a round-robin one (only the learned
predictors can be compared)."""

import argparse

from asymmlfc.cli import RunConfig, compare


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="digit_parity")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--events", type=int, default=20000)
    args = ap.parse_args()
    cfg = RunConfig(scenario=args.scenario, seed=args.seed, iterations=args.events)
    for schedule in ("mirrored", "cyclic"):
        res = compare(cfg, schedule)
        print(f"{schedule:>8s}: {res['verdict']} ({res['reason']})")
        gaps = res["f1_difference"]
        if gaps:
            worst = max(gaps, key=gaps.get)
            print(f"          largest F1 gap {gaps[worst]:.4f} on {worst}")


if __name__ == "__main__":
    main()
