"""Stepsize and residual histories of every rule on one instance, in the
layout of a best-residual / cumulative-average-stepsize plot.

Writes one CSV per rule via the regular trace writer, plus a short text
summary. Plotting is left to the reader's tool of choice.

    python3 scripts/stepsize_profile.py --family lasso --out-dir profiles
"""

import argparse
from pathlib import Path

import numpy as np

from adasafe.core import SolverConfig, run
from adasafe.io import write_trace
from adasafe.problems import FAMILIES, default_instance, generate_instance

RULE_ORDER = ["adapg", "bb-long", "bb-short", "martinez", "lnse", "aa"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--family", default="lasso", choices=FAMILIES)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=1e-10)
    ap.add_argument("--out-dir", default="profiles")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem, _ = generate_instance(default_instance(args.family, args.seed))
    print(f"{'rule':<9} {'iters':>6} {'mean gamma':>11} {'max rho':>8} {'fast/safe/tie':>14}")
    for rule in RULE_ORDER:
        cfg = SolverConfig(rule=rule, nu=problem.holder_exponent_hint, tol=args.tol, max_iters=50000)
        tr = run(problem, cfg)
        write_trace(tr, out / f"{args.family}_{rule}.csv")
        branches = [r.branch for r in tr.records]
        counts = "/".join(str(branches.count(b)) for b in ("fast", "safe", "tie"))
        print(f"{rule:<9} {tr.iterations:>6} {np.mean(tr.gammas):>11.4e} "
              f"{np.max(tr.column('rho')):>8.3f} {counts:>14}")


if __name__ == "__main__":
    main()
