"""Suboptimality decay on the p-norm family for several exponents p.

For each p the gradient is (p-1)-Hölder continuous. The script reports
iterations to tolerance, the fitted log-log slope of the best suboptimality
and the smallest scaled stepsize seen at a decrease event.

    python3 scripts/holder_decay.py --ps 1.5 1.8 2.0 --rule aa

Small exponents (p close to 1) converge slowly; p=1.2 needs more than
50000 iterations at the default tolerance.
"""

import argparse

from adasafe.core import SolverConfig, run
from adasafe.diagnostics import check_rate_bounds, check_recipe, lyapunov_sequence, reference_solution
from adasafe.problems import InstanceSpec, generate_instance
from adasafe.stepsizes import RULES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ps", nargs="+", type=float, default=[1.5, 1.8, 2.0])
    ap.add_argument("--rule", default="adapg", choices=sorted(RULES))
    ap.add_argument("--rows", type=int, default=100)
    ap.add_argument("--cols", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=1e-6)
    ap.add_argument("--max-iters", type=int, default=50000)
    args = ap.parse_args()

    print(f"{'p':>5} {'nu':>5} {'status':>10} {'iters':>7} {'slope':>8} {'lambda_min':>11} {'rate':>5}")
    for p in args.ps:
        spec = InstanceSpec(family="p-norm", rows=args.rows, cols=args.cols, p=p, seed=args.seed)
        problem, _ = generate_instance(spec)
        nu = problem.holder_exponent_hint
        cfg = SolverConfig(rule=args.rule, nu=nu, tol=args.tol, max_iters=args.max_iters)
        x_star, phi_star = reference_solution(problem, cfg)
        tr = run(problem, cfg, snapshots=True)
        U1 = lyapunov_sequence(tr, x_star, cfg.pi, phi_star)[0]
        rate = check_rate_bounds(tr, U1, nu, phi_star)
        recipe = check_recipe(tr, cfg.pi, nu)
        print(f"{p:>5.2f} {nu:>5.2f} {tr.status:>10} {tr.iterations:>7} {rate.decay_slope:>8.2f} "
              f"{recipe.p3_empirical_lambda_min:>11.3e} {'ok' if rate.holds else 'FAIL':>5}")


if __name__ == "__main__":
    main()
