"""Gradient evaluations needed by each stepsize rule on the desk-scale
families, over several seeds.

    python3 scripts/compare_rules.py --families lasso logreg --seeds 0 1 2
"""

import argparse
import csv
import math
import time

import numpy as np

from adasafe.core import SolverConfig, run
from adasafe.problems import FAMILIES, default_instance, generate_instance

RULE_ORDER = ["adapg", "bb-long", "bb-short", "martinez", "lnse", "aa"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--families", nargs="+", default=list(FAMILIES), choices=FAMILIES)
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    ap.add_argument("--tol", type=float, default=1e-8)
    ap.add_argument("--max-iters", type=int, default=20000)
    ap.add_argument("--memory", type=int, default=4)
    ap.add_argument("--pi", type=float, default=1.2)
    ap.add_argument("--csv", help="write one row per (family, seed, rule)")
    args = ap.parse_args()

    rows = []
    for family in args.families:
        table = {r: [] for r in RULE_ORDER}
        for seed in args.seeds:
            problem, _ = generate_instance(default_instance(family, seed))
            for rule in RULE_ORDER:
                cfg = SolverConfig(rule=rule, pi=args.pi, memory=args.memory,
                                   nu=problem.holder_exponent_hint, tol=args.tol,
                                   max_iters=args.max_iters)
                t0 = time.perf_counter()
                tr = run(problem, cfg)
                hit = tr.evals_to_reach(args.tol)
                table[rule].append(hit if hit is not None else math.inf)
                rows.append(dict(family=family, seed=seed, rule=rule, evals=hit, status=tr.status,
                                 seconds=round(time.perf_counter() - t0, 4),
                                 fast_share=np.mean([r.branch == "fast" for r in tr.records])))
        print(f"\n{family}: evaluations to residual {args.tol:g} (seeds {args.seeds})")
        ranked = sorted(RULE_ORDER, key=lambda r: np.median(table[r]))
        for rule in ranked:
            vals = " ".join(f"{v:>6}" for v in table[rule])
            print(f"  {rule:<9} median {np.median(table[rule]):>8.0f}   {vals}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        print(f"\nwrote {args.csv}")


if __name__ == "__main__":
    main()
