"""Command line entry point: ``run``, ``compare``, ``check`` and ``generate``.

Exit codes: 0 success (converged / all checks pass), 1 usage, config or
data errors, 2 iteration cap reached.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path


from . import diagnostics as diag
from .core import NonFiniteIterate, run
from .io import (
    ConfigError, ParseError, RunConfig, parse_config, read_config, read_libsvm, read_optimum,
    read_snapshots, read_trace, remap_binary_labels, write_libsvm, write_optimum,
    write_snapshots, write_trace,
)
from .problems import (
    FAMILIES, InstanceSpec, SparseDesign, default_instance, generate_instance,
    problem_from_design, support_size,
)
from .stepsizes import RULES

log = logging.getLogger("adasafe")

EXIT_OK, EXIT_ERROR, EXIT_MAXITER = 0, 1, 2
RULE_ORDER = ("adapg", "bb-long", "bb-short", "martinez", "lnse", "aa")
MILESTONES = tuple(10.0 ** -d for d in range(1, 13))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # bad flags exit with EXIT_ERROR rather than argparse's default of 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_ERROR)


def _add_solver_flags(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--problem", choices=FAMILIES)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", help="LIBSVM file")
    src.add_argument("--spec", help="JSON instance spec for the generator")
    p.add_argument("--n-features", dest="n_features", type=int,
                   help="feature dimension of --data (default: largest index seen)")
    p.add_argument("--pi", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--memory", type=int)
    p.add_argument("--gamma0", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lam", type=float, help="l1 weight (lasso, logreg, p-norm)")
    p.add_argument("--M", dest="M", type=float, help="cubic weight")
    p.add_argument("--p", dest="p", type=float, help="exponent of the p-norm family")
    p.add_argument("--aa-nu-mode", dest="aa_nu_mode", choices=("aggregate", "per-pair"))


def build_parser():
    parser = _Parser(prog="adasafe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="solve one problem with one rule")
    _add_solver_flags(p)
    p.add_argument("--rule", choices=sorted(RULES))
    p.add_argument("--out", help="trace CSV")
    p.add_argument("--snapshots", action="store_true", default=None,
                   help="also store iterates next to the trace (<out>.npz)")
    p.add_argument("--optimum-out", dest="optimum_out", help="write final iterate as JSON")

    p = sub.add_parser("compare", help="run several rules on one problem")
    _add_solver_flags(p)
    p.add_argument("--rules", default=",".join(RULE_ORDER))
    p.add_argument("--out-prefix", dest="out_prefix", default="compare_")
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("check", help="verify a saved trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--pi", type=float, default=1.2)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--memory", type=int, default=4, help="window for the stepsize lower bound")
    p.add_argument("--optimum", help="JSON with reference x and objective")
    p.add_argument("--snapshots", help="iterate file (default: <trace>.npz if present)")
    p.add_argument("--lyapunov", action="store_true", help="require the Lyapunov check")
    p.add_argument("--rate", action="store_true", help="require the rate-bound check")

    p = sub.add_parser("generate", help="write a synthetic instance in LIBSVM format")
    p.add_argument("--spec", help="JSON instance spec")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    return parser


def _load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from None


def _instance_from_file(path):
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise ConfigError(str(path), "instance spec must be a mapping")
    try:
        return InstanceSpec(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(path), str(exc)) from None


def resolve_run_config(args, extra=()):
    """Merge a config file with explicitly given flags and validate."""
    doc = read_config(args.config).as_dict() if getattr(args, "config", None) else {}
    doc = {k: v for k, v in doc.items() if v is not None}
    keys = ("problem", "data", "n_features", "pi", "nu", "memory", "gamma0", "tol", "max_iters", "seed",
            "lam", "M", "p", "aa_nu_mode") + tuple(extra)
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    spec_path = getattr(args, "spec", None)
    if spec_path:
        spec = _instance_from_file(spec_path).as_dict()
        if "problem" not in doc:
            doc["problem"] = spec["family"]
        elif doc["problem"] != spec["family"]:
            raise ConfigError("problem", f"--problem {doc['problem']} does not match spec family {spec['family']}")
        doc["instance"] = spec
    if doc.get("instance"):
        doc["instance"] = {k: v for k, v in doc["instance"].items() if k != "family"}
        for key in ("lam", "M", "p", "seed"):
            val = getattr(args, key, None)
            if val is not None:
                doc["instance"][key] = val
    return parse_config(doc)


def build_problem(cfg):
    """Return ``(problem, meta)`` for a validated :class:`RunConfig`."""
    if cfg.data:
        try:
            design = read_libsvm(cfg.data, n_cols=cfg.n_features)
        except OSError as exc:
            raise ConfigError("data", f"cannot read {cfg.data}: {exc}") from None
        except ParseError as exc:
            raise ConfigError("data", f"{cfg.data}: {exc}") from None
        if cfg.problem in ("logreg", "cubic"):
            design.labels = remap_binary_labels(design.labels)
        problem = problem_from_design(cfg.problem, design, lam=cfg.lam, M=cfg.M, p=cfg.p)
        return problem, {"source": str(cfg.data)}
    return generate_instance(cfg.instance_spec())


def _solve(cfg, rule=None, snapshots=False):
    problem, meta = build_problem(cfg)
    solver_cfg = cfg.solver_config(problem.holder_exponent_hint)
    if rule is not None:
        solver_cfg.rule = rule
    trace = run(problem, solver_cfg, snapshots=snapshots)
    return trace, problem


def _summary_line(trace, problem):
    last = trace.records[-1]
    parts = [
        f"status={trace.status}",
        f"rule={trace.rule}",
        f"iterations={trace.iterations}",
        f"grad_evals={trace.iterations}",
        f"residual={last.residual:.6e}",
        f"best_residual={trace.best_residuals[-1]:.6e}",
        f"objective={last.objective:.15g}",
    ]
    if problem.name in ("lasso", "logreg", "p-norm"):
        parts.append(f"nstar={support_size(trace.x_final)}")
    return " ".join(parts)


def cmd_run(args):
    cfg = resolve_run_config(args, extra=("rule",))
    if getattr(args, "snapshots", None):
        cfg.snapshots = True
    if args.out:
        cfg.out = args.out
    trace, problem = _solve(cfg, snapshots=cfg.snapshots)
    if cfg.out:
        write_trace(trace, cfg.out)
        if cfg.snapshots:
            write_snapshots(trace, cfg.out + ".npz")
    if args.optimum_out:
        write_optimum(trace.x_final, problem.objective(trace.x_final), args.optimum_out)
    print(_summary_line(trace, problem))
    return EXIT_OK if trace.converged else EXIT_MAXITER


def _compare_worker(payload):
    cfg_dict, rule = payload
    cfg = RunConfig(**cfg_dict)
    try:
        trace, _ = _solve(cfg, rule=rule)
        return rule, trace, None
    except (NonFiniteIterate, ValueError, ArithmeticError) as exc:
        return rule, None, f"{type(exc).__name__}: {exc}"


def summarize(rule, trace, error=None):
    row = {"rule": rule}
    if trace is None:
        row.update(status="error", iterations="", grad_evals="", final_best_residual="",
                   final_objective="", error=error or "")
    else:
        row.update(status=trace.status, iterations=trace.iterations, grad_evals=trace.iterations,
                   final_best_residual=repr(float(trace.best_residuals[-1])),
                   final_objective=repr(float(trace.records[-1].objective)), error="")
    for level in MILESTONES:
        hit = trace.evals_to_reach(level) if trace is not None else None
        row[f"evals_{level:.0e}"] = "" if hit is None else hit
    return row


def cmd_compare(args):
    cfg = resolve_run_config(args)
    if args.jobs is not None:
        cfg.jobs = args.jobs
        if cfg.jobs < 1:
            raise ConfigError("jobs", "must be >= 1")
    rules = [r.strip() for r in args.rules.split(",") if r.strip()]
    unknown = [r for r in rules if r not in RULES]
    if unknown or not rules:
        raise ConfigError("rules", f"unknown rules {unknown}; choose from {sorted(RULES)}")

    payloads = [(asdict(cfg), r) for r in rules]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_compare_worker, payloads))
    else:
        results = [_compare_worker(p) for p in payloads]

    prefix = args.out_prefix
    rows = []
    for rule, trace, error in results:
        if trace is not None:
            write_trace(trace, f"{prefix}{rule}.csv")
        rows.append(summarize(rule, trace, error))
    summary_path = f"{prefix}summary.csv"
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)

    print(f"{'rule':<10} {'status':<10} {'evals':>7} {'best residual':>14}  evals to 1e-4/1e-8/1e-12")
    for row in rows:
        hits = "/".join(str(row[f"evals_{lvl:.0e}"]) or "-" for lvl in (1e-4, 1e-8, 1e-12))
        best = row["final_best_residual"]
        best = f"{float(best):.3e}" if best != "" else "-"
        print(f"{row['rule']:<10} {row['status']:<10} {str(row['iterations']):>7} {best:>14}  {hits}")
        if row["error"]:
            print(f"  {row['rule']}: {row['error']}")
    print(f"summary written to {summary_path}")

    statuses = {row["status"] for row in rows}
    if "error" in statuses:
        return EXIT_ERROR
    if "maxiter" in statuses:
        return EXIT_MAXITER
    return EXIT_OK


def cmd_check(args):
    if not (1.0 <= args.pi <= 2.0):
        raise ConfigError("pi", f"must lie in [1, 2], got {args.pi}")
    if not (0.0 < args.nu <= 1.0):
        raise ConfigError("nu", f"must lie in (0, 1], got {args.nu}")
    trace = read_trace(args.trace)
    snap_path = args.snapshots or (args.trace + ".npz")
    has_snaps = Path(snap_path).exists()
    if args.snapshots and not has_snaps:
        raise UsageError(f"snapshot file {args.snapshots} not found")
    if has_snaps:
        read_snapshots(snap_path, trace)

    want_lyap = args.lyapunov or bool(args.optimum)
    want_rate = args.rate or bool(args.optimum)
    if (want_lyap or want_rate) and not args.optimum:
        raise UsageError("--optimum is required for Lyapunov and rate checks")
    if (want_lyap or want_rate) and not has_snaps:
        raise UsageError("Lyapunov and rate checks need iterate snapshots; "
                         "rerun `adasafe run --snapshots` or pass --snapshots")

    try:
        report = diag.check_recipe(trace, args.pi, args.nu, window=max(args.memory, 2))
    except diag.InsufficientTrace as exc:
        raise UsageError(str(exc)) from None
    if want_lyap or want_rate:
        x_star, phi_star = read_optimum(args.optimum)
        if x_star.shape != trace.snapshots[0].shape:
            raise UsageError("optimum dimension does not match the trace iterates")
        U = diag.lyapunov_sequence(trace, x_star, args.pi, phi_star)
        if want_lyap:
            mono, worst = diag.check_lyapunov(trace, x_star, phi_star, args.pi)
            report.lyapunov_monotone, report.lyapunov_worst_violation = mono, worst
        if want_rate:
            rate = diag.check_rate_bounds(trace, U[0], args.nu, phi_star)
            report.rate_bound_holds, report.rate_worst_slack = rate.holds, rate.worst_slack
            report.decay_slope = rate.decay_slope
    print(report.to_json())
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_ERROR


def cmd_generate(args):
    if args.spec:
        spec = _instance_from_file(args.spec)
    elif args.family:
        spec = default_instance(args.family, args.seed or 0)
    else:
        raise UsageError("pass --spec or --family")
    for key in ("rows", "cols", "seed"):
        val = getattr(args, key)
        if val is not None:
            setattr(spec, key, val)
    if args.family and args.family != spec.family:
        raise ConfigError("family", f"--family {args.family} does not match spec family {spec.family}")
    spec.validate()
    _, meta = generate_instance(spec)
    design = SparseDesign.from_matrix(meta["A"], meta["b"])
    write_libsvm(design, args.out)
    info = {"spec": spec.as_dict(), "lam": meta["lam"], "rows": spec.rows, "cols": spec.cols}
    if "planted" in meta:
        info["planted"] = [float(v) for v in meta["planted"]]
    if "zero_threshold" in meta:
        info["zero_threshold"] = meta["zero_threshold"]
    Path(args.out + ".meta.json").write_text(json.dumps(info, indent=2), encoding="utf-8")
    print(f"wrote {spec.family} instance {spec.rows}x{spec.cols} (seed {spec.seed}) to {args.out}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "check": cmd_check, "generate": cmd_generate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParseError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except NonFiniteIterate as exc:
        print(f"error: diverged: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
