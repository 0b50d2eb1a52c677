"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line
in the terminal summary."""

import io as stdio
import json
import math
import time

import numpy as np
import pytest

from adasafe.cli import main
from adasafe.core import (
    CompositeProblem, IterateState, LocalEstimates, SolverConfig, StepRecord, Trace,
    adapg_candidate, fixed_point_residual, local_estimates, prox_gradient_step, run,
    safeguarded_gamma,
)
from adasafe.diagnostics import (
    check_lyapunov, check_rate_bounds, check_recipe, lyapunov_sequence, reference_solution,
)
from adasafe.io import ConfigError, ParseError, parse_config, parse_libsvm
from adasafe.problems import (
    InstanceSpec, cubic_problem, generate_instance, lasso_problem,
    logreg_problem, pnorm_problem, soft_threshold, support_size,
)
from adasafe.stepsizes import (
    RULES, PairHistory, anderson, bb_long, bb_short, lnse, martinez, plain_adapg,
)

from conftest import record_criterion

FAMILIES = ["lasso", "logreg", "cubic", "p-norm"]
RULE_NAMES = ["adapg", "bb-long", "bb-short", "martinez", "lnse", "aa"]
TOL = 1e-8
MAX_ITERS = 20_000


def solver_config(problem, rule, tol=TOL):
    return SolverConfig(rule=rule, nu=problem.holder_exponent_hint, tol=tol, max_iters=MAX_ITERS)


@pytest.fixture(scope="module")
def optima(instances):
    """Pre-solves at 100x tighter tolerance than the runs."""
    out = {}
    for family in FAMILIES:
        problem, _ = instances[family]
        out[family] = reference_solution(problem, solver_config(problem, "aa"), factor=100.0)
    return out


# 1 ----------------------------------------------------------------------------

def test_safeguard_correctness(tmp_path, capsys):
    failures, worst = [], [math.inf, math.inf, math.inf]
    start = time.perf_counter()
    for family in FAMILIES:
        nu = "0.5" if family == "p-norm" else "1.0"
        for rule in RULE_NAMES:
            out = str(tmp_path / f"{family}_{rule}.csv")
            rc_run = main(["run", "--problem", family, "--rule", rule, "--out", out,
                           "--tol", str(TOL), "--max-iters", str(MAX_ITERS)])
            capsys.readouterr()
            rc_check = main(["check", "--trace", out, "--nu", nu])
            report = json.loads(capsys.readouterr().out.rsplit("\n", 2)[0])
            lam = float(report["p3_empirical_lambda_min"])
            worst = [min(worst[0], report["p1_min_slack"]), min(worst[1], report["p2_min_slack"]),
                     min(worst[2], lam)]
            ok = (rc_run == 0 and rc_check == 0 and report["p1_min_slack"] >= -1e-12
                  and report["p2_min_slack"] >= -1e-12 and lam > 0)
            if not ok:
                failures.append(f"{family}/{rule}")
    elapsed = time.perf_counter() - start
    passed = not failures and elapsed < 30.0
    record_criterion("1 safeguard correctness", passed,
                     f"24 run+check pairs in {elapsed:.1f}s; min P1 {worst[0]:.1e}, min P2 {worst[1]:.1e}, "
                     f"min lambda {worst[2]:.1e}; failures {failures}")
    assert not failures
    assert elapsed < 30.0


# 2 ----------------------------------------------------------------------------

def test_lasso_convergence_and_support(instances, optima):
    problem, meta = instances["lasso"]
    assert meta["lam"] == 0.1
    x_ref, _ = optima["lasso"]
    ref_support = set(np.flatnonzero(x_ref))
    bad = []
    for rule in RULE_NAMES:
        tr = run(problem, solver_config(problem, rule))
        reached = tr.evals_to_reach(TOL)
        support = set(np.flatnonzero(tr.x_final))
        if reached is None or reached > MAX_ITERS or support != ref_support:
            bad.append((rule, reached, len(support)))
    record_criterion("2 lasso convergence", not bad,
                     f"n* = {len(ref_support)} from the pre-solve; failures {bad}")
    assert not bad


# 3 ----------------------------------------------------------------------------

def test_rate_bound(instances, optima):
    bad, worst = [], math.inf
    for family in FAMILIES:
        problem, _ = instances[family]
        x_star, phi_star = optima[family]
        for rule in RULE_NAMES:
            cfg = solver_config(problem, rule)
            tr = run(problem, cfg, snapshots=True)
            U1 = lyapunov_sequence(tr, x_star, cfg.pi, phi_star)[0]
            rep = check_rate_bounds(tr, U1, cfg.nu, phi_star, rel=1e-9)
            worst = min(worst, rep.worst_slack / abs(U1))
            if not rep.holds:
                bad.append(f"{family}/{rule}")
    record_criterion("3 rate bound", not bad, f"worst slack / U1 = {worst:.2e}; failures {bad}")
    assert not bad


# 4 ----------------------------------------------------------------------------

def test_lyapunov_descent(instances, optima):
    bad, detail = [], []
    for family in FAMILIES:
        problem, _ = instances[family]
        x_star, phi_star = optima[family]
        cfg = solver_config(problem, "adapg")
        tr = run(problem, cfg, snapshots=True)
        monotone, worst = check_lyapunov(tr, x_star, phi_star, cfg.pi, rel=1e-9)
        detail.append(f"{family} max dU {worst:.1e}")
        if not monotone:
            bad.append(family)
    record_criterion("4 Lyapunov descent", not bad, "; ".join(detail))
    assert not bad


# 5 ----------------------------------------------------------------------------

def test_holder_regime(instances, optima):
    problem, _ = instances["p-norm"]
    assert problem.holder_exponent_hint == 0.5
    x_star, phi_star = optima["p-norm"]
    slopes, bad = {}, []
    for rule in RULE_NAMES:
        cfg = solver_config(problem, rule, tol=1e-6)
        tr = run(problem, cfg, snapshots=True)
        U1 = lyapunov_sequence(tr, x_star, cfg.pi, phi_star)[0]
        slope = check_rate_bounds(tr, U1, cfg.nu, phi_star).decay_slope
        slopes[rule] = round(slope, 2)
        if not (tr.converged and slope <= -0.5 + 0.1):
            bad.append(rule)
    record_criterion("5 Hölder regime", not bad, f"log-log slopes {slopes}; failures {bad}")
    assert not bad


# 6 ----------------------------------------------------------------------------

def test_toy_oracles():
    quad = CompositeProblem(lambda x: 0.5 * float(x @ x), lambda x: np.array(x, float),
                            lambda x: 0.0, lambda x, g: np.array(x, float), 1)
    tq = run(quad, SolverConfig(rule="adapg", pi=1.2, tol=1e-10), x0=[1.0])
    sep = lasso_problem(np.eye(2), np.array([3.0, 0.0]), 1.0)
    ts = run(sep, SolverConfig(tol=1e-10))
    err = np.max(np.abs(ts.x_final - [2.0, 0.0]))
    ok = abs(tq.x_final[0]) <= 1e-9 and err <= 1e-10
    record_criterion("6 toy oracles", ok, f"|x| = {abs(tq.x_final[0]):.1e}; lasso error {err:.1e}")
    assert ok


# 7 ----------------------------------------------------------------------------

def test_anderson_ordering(instances):
    ranking, verdict = {}, {}
    for family in ("lasso", "logreg"):
        problem, _ = instances[family]
        evals = {}
        for rule in RULE_NAMES:
            cfg = solver_config(problem, rule)
            cfg.memory = 4
            hit = run(problem, cfg).evals_to_reach(TOL)
            evals[rule] = hit if hit is not None else math.inf
        ranking[family] = sorted(evals.items(), key=lambda kv: kv[1])
        verdict[family] = evals["aa"] <= evals["adapg"]
    text = "; ".join(f"{fam}: " + ", ".join(f"{r}={n}" for r, n in rk) for fam, rk in ranking.items())
    record_criterion("7 AA ordering", all(verdict.values()), f"{verdict} | {text}")
    assert verdict["logreg"], text
    assert verdict["lasso"], text


# 8 ----------------------------------------------------------------------------

def _hist(pairs, memory=4, nu=1.0):
    h = PairHistory(memory, nu)
    for s, y in pairs:
        h.push(s, y, 1.0)
    return h


def _est(ell, c):
    big_l = math.sqrt(ell * c)
    return LocalEstimates(ell, big_l, c, 1.0, ell, big_l, 1.0, ell, 1.0, big_l ** 2)


def _state(dx, dg, gamma):
    z = np.zeros(2)
    return IterateState(np.array(dx, float), z, np.array(dg, float), z.copy(), gamma, gamma)


def _lnse_case(prev_long, prev_short, est, pair=((1.0, 0.0), (0.5, 0.0))):
    h = _hist([pair])
    h.last_bb_long, h.last_bb_short = prev_long, prev_short
    return lnse(h, est)


def _raises(exc, fn):
    try:
        fn()
    except exc:
        return True
    return False


def _abs_run(rule):
    p = CompositeProblem(lambda x: 0.0, lambda x: np.zeros_like(x),
                         lambda x: float(np.abs(x).sum()), soft_threshold, 1)
    tr = run(p, SolverConfig(rule=rule, gamma0=1.0), x0=[5.0], snapshots=True)
    xs = [float(x[0]) for x in tr.snapshots]
    steps_ok = all(abs(xs[k] - max(xs[k - 1] - tr.records[k - 1].gamma, 0.0)) <= 1e-12
                   for k in range(1, len(xs)))
    return steps_ok and tr.x_final[0] == 0.0


def _trace_with(gammas, ell=0.0, big_l=0.0):
    recs = [StepRecord(k + 1, g, g / (gammas[k - 1] if k else g), ell, big_l, math.inf, 1.0, 0.0,
                       "safe", 1.0) for k, g in enumerate(gammas)]
    return Trace(records=recs, objective0=0.0)


def unit_examples():
    close = lambda a, b, tol=1e-12: abs(a - b) <= tol
    e1 = local_estimates([2.0, 0.0], [1.0, 0.0], 1.0, 1.0)
    e2 = local_estimates([1.0, 1.0], [1.0, 0.0], 1.0, 1.0)
    e3 = local_estimates([1.0, 1.0], [1.0, 0.0], 1.0, 0.5)
    z2 = CompositeProblem(lambda x: 0.0, lambda x: 0 * x, lambda x: 0.0, lambda x, g: x, 2)
    l1 = lasso_problem(np.eye(1), np.zeros(1), 1.0)
    proj = CompositeProblem(lambda x: 0.0, lambda x: 0 * x, lambda x: 0.0,
                            lambda x, g: np.maximum(x, 0.0), 1)
    mart = _hist([((1.0, 0.0), (0.5, 0.0)), ((1.0, 0.0), (0.5, 0.0))])
    rng = np.random.default_rng(0)
    A7, b7 = rng.standard_normal((7, 3)), np.where(rng.random(7) < 0.5, -1.0, 1.0)
    lr = logreg_problem(A7, b7, 0.0)
    cub = cubic_problem(np.zeros((1, 1)), np.array([-1.0]), 2.0)
    pn1 = pnorm_problem(np.eye(1), np.zeros(1), 1.5, 0.0)
    A5, b5 = rng.standard_normal((5, 3)), rng.standard_normal(5)
    xr = rng.standard_normal(3)
    _, m1 = generate_instance(InstanceSpec(family="lasso", rows=20, cols=30, seed=4))
    _, m2 = generate_instance(InstanceSpec(family="lasso", rows=20, cols=30, seed=4))
    big_lam = 1.01 * m1["zero_threshold"]
    big = generate_instance(InstanceSpec(family="lasso", rows=20, cols=30, seed=4, lam=big_lam))[0]
    kw = dict(rows=20, cols=10, seed=3, lam=0.1, noise=0.01)
    _, ml = generate_instance(InstanceSpec(family="lasso", **kw))
    _, mp = generate_instance(InstanceSpec(family="p-norm", p=2.0, **kw))
    lyap = Trace(records=[StepRecord(1, 1.0, 1.0, 0.0, 0.0, math.inf, 0.0, 0.5, "init")],
                 objective0=0.5, snapshots=[np.array([1.0]), np.array([1.0])])
    lyap0 = Trace(records=[StepRecord(1, 1.0, 1.0, 0.0, 0.0, math.inf, 0.0, 0.0, "init")],
                  objective0=0.0, snapshots=[np.zeros(2), np.zeros(2)])
    d1 = parse_libsvm(stdio.StringIO("+1 1:0.5 3:-2.0"))
    d2 = parse_libsvm(stdio.StringIO("-1"))
    quad = CompositeProblem(lambda x: 0.5 * float(x @ x), lambda x: np.array(x, float),
                            lambda x: 0.0, lambda x, g: np.array(x, float), 1)
    return {
        "estimates collinear": (e1.ell, e1.big_l, e1.c, e1.scaled_lambda) == (0.5, 0.5, 0.5, 1.0),
        "estimates skew": close(e2.ell, 0.5) and close(e2.big_l, 2 ** -0.5) and close(e2.c, 1.0),
        "estimates nu=0.5": close(e3.step_norm, 2 ** 0.5) and close(e3.scaled_ell, 0.5 * 2 ** 0.25)
                             and close(e3.scaled_lambda, 2 ** -0.25),
        "adapg zero bracket": close(adapg_candidate(1, 1, 1, 1, 1.0), 2 ** 0.5),
        "adapg curvature": close(adapg_candidate(1, 1, 1, 2, 1.0), 6 ** -0.5),
        "adapg pi=1.2": close(adapg_candidate(1, 1, 1, 1, 1.2), (1 / 1.2 + 1) ** 0.5),
        "safeguard safe": safeguarded_gamma(0.5, 2.0) == (0.5, "safe"),
        "safeguard fast": safeguarded_gamma(2.0, 0.5) == (0.5, "fast"),
        "safeguard abstain": safeguarded_gamma(1.0, math.inf) == (1.0, "safe"),
        "prox identity": prox_gradient_step(z2, np.ones(2), np.array([1.0, 0.0]), 0.5).tolist() == [0.5, 1.0],
        "prox soft threshold": prox_gradient_step(l1, np.array([3.0]), np.zeros(1), 1.0).tolist() == [2.0],
        "prox projection": prox_gradient_step(proj, np.array([1.0]), np.array([3.0]), 1.0).tolist() == [0.0],
        "residual direct": close(fixed_point_residual(_state([1, 0], [1, 0], 0.5)), 1.0),
        "residual fixed point": fixed_point_residual(_state([0, 0], [0, 0], 1.0)) == 0.0,
        "residual derived": close(fixed_point_residual(_state([0, 2], [0, 0.5], 1.0)), 1.5),
        "run quadratic": abs(run(quad, SolverConfig(tol=1e-10), x0=[1.0]).x_final[0]) <= 1e-9,
        "run abs value, every rule": all(_abs_run(r) for r in RULES),
        "run separable lasso": np.max(np.abs(run(lasso_problem(np.eye(2), np.array([3.0, 0.0]), 1.0),
                                                 SolverConfig(tol=1e-10)).x_final - [2, 0])) <= 1e-10,
        "bb_long reciprocal": bb_long(_est(0.5, 0.5)) == 2.0,
        "bb_long from pair": close(bb_long(e2), 2.0),
        "bb_long abstain": bb_long(_est(0.0, 1.0)) == math.inf,
        "bb_short reciprocal": bb_short(_est(0.5, 0.5), 1.0) == 2.0,
        "bb_short from pair": close(bb_short(e2, 1.0), 1.0),
        "bb_short nu=0.5": close(bb_short(e3, 0.5), 2 ** 0.25),
        "martinez long": close(martinez(mart, mart.latest.est, 5.0), 2.0),
        "martinez short": close(martinez(mart, mart.latest.est, 3.0), 2.0),
        "martinez abstain": martinez(_hist([((1, 0), (1, 0)), ((0, 1), (0, 1))]), e2, 1.0) == math.inf,
        "lnse branch 1": _lnse_case(4.0, 2.0, _est(0.5, 1.0)) == 2.0,
        "lnse branch 2": _lnse_case(2.0, 2.0, _est(0.25, 1.0)) == 1.0,
        "lnse tie": _lnse_case(3.0, 1.0, local_estimates([1.0, 0.0], [0.5, 0.0], 1.0, 1.0)) == 2.0,
        "aa two pairs": close(anderson(_hist([((1, 0), (1, 0)), ((0, 1), (0, 2))], memory=2), 1.0), 0.6),
        "aa single pair": anderson(_hist([((1, 1), (1, 0))], memory=1), 1.0) == bb_short(e2, 1.0),
        "aa abstain": anderson(_hist([((1, 0), (0, 0))]), 1.0) == math.inf,
        "plain abstains": plain_adapg() == math.inf and safeguarded_gamma(0.3, plain_adapg())[0] == 0.3,
        "lasso prox": l1.prox(np.array([-3.0]), 1.0).tolist() == [-2.0]
                      and lasso_problem(np.eye(2), np.zeros(2), 1.0).prox(np.array([-3.0, 0.5]), 1.0).tolist() == [-2.0, 0.0],
        "logreg at zero": close(lr.smooth_value(np.zeros(3)), 7 * math.log(2), 1e-12)
                          and np.allclose(lr.smooth_gradient(np.zeros(3)), -0.5 * A7.T @ b7, atol=1e-12, rtol=0),
        "cubic pure": cubic_problem(np.zeros((2, 2)), np.zeros(2), 1.0).smooth_value(np.zeros(2)) == 0.0,
        "cubic 1-D": close(cub.smooth_gradient(np.array([1.0]))[0], 0.0),
        "pnorm p=2": close(pnorm_problem(A5, b5, 2.0, 0.0).smooth_value(xr),
                           lasso_problem(A5, b5, 0.0).smooth_value(xr), 1e-12),
        "pnorm 1-D": close(pn1.smooth_gradient(np.array([0.49]))[0], 0.7)
                     and pn1.smooth_gradient(np.zeros(1))[0] == 0.0,
        "generator determinism": np.array_equal(m1["A"], m2["A"]) and np.array_equal(m1["b"], m2["b"]),
        "lasso zero threshold": support_size(run(big, SolverConfig(tol=1e-12)).x_final) == 0,
        "p-norm p=2 instance": np.array_equal(ml["A"], mp["A"]) and np.array_equal(ml["b"], mp["b"]),
        "recipe constant gamma": check_recipe(_trace_with([0.5] * 5), 1.0, 1.0).p1_min_slack == 1.0,
        "recipe overshoot": check_recipe(_trace_with([1.0, 1.0, 5.0], 0.5, 1.0), 1.2, 1.0).p2_min_slack < 0,
        "lyapunov at optimum": lyapunov_sequence(lyap0, np.zeros(2), 1.2, 0.0)[0] == 0.0,
        "lyapunov 1.5": close(lyapunov_sequence(lyap, np.zeros(1), 1.0, 0.0)[0], 1.5),
        "libsvm row": d1.labels.tolist() == [1.0] and d1.rows == [[(0, 0.5), (2, -2.0)]],
        "libsvm empty row": d2.labels.tolist() == [-1.0] and d2.rows == [[]],
        "libsvm order": _raises(ParseError, lambda: parse_libsvm(stdio.StringIO("1 2:1 1:1"))),
        "config defaults": parse_config({"family": "lasso", "rule": "aa"}).solver_config().pi == 1.2,
        "config pi=2.5": _raises(ConfigError, lambda: parse_config({"pi": 2.5})),
        "config nu=0": _raises(ConfigError, lambda: parse_config({"nu": 0})),
    }


def test_unit_algebra():
    results = unit_examples()
    failed = [name for name, ok in results.items() if not ok]
    record_criterion("8 unit algebra", not failed, f"{len(results) - len(failed)}/{len(results)} examples; failed {failed}")
    assert not failed
