"""Runtime verification of solver traces.

Checks the growth and curvature caps every certified stepsize sequence must
satisfy, the lower bound on the scaled stepsize, monotonicity of the
Lyapunov function and the ``P_min <= U_1 / sum(gamma)`` rate bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, field
from typing import Optional

import numpy as np

from .core import SolverConfig, run

__all__ = [
    "InsufficientTrace",
    "MissingIterates",
    "MissingOptimum",
    "RecipeReport",
    "RateReport",
    "check_recipe",
    "lyapunov_sequence",
    "check_lyapunov",
    "check_rate_bounds",
    "reference_solution",
    "decay_slope",
    "ALGEBRAIC_SLACK",
    "RELATIVE_SLACK",
]

ALGEBRAIC_SLACK = 1e-12
RELATIVE_SLACK = 1e-9


class InsufficientTrace(ValueError):
    pass


class MissingIterates(ValueError):
    pass


class MissingOptimum(ValueError):
    pass


@dataclass
class RecipeReport:
    p1_min_slack: float
    p2_min_slack: float
    p3_empirical_lambda_min: float
    decrease_events: int
    lyapunov_monotone: Optional[bool] = None
    lyapunov_worst_violation: Optional[float] = None
    rate_bound_holds: Optional[bool] = None
    rate_worst_slack: Optional[float] = None
    decay_slope: Optional[float] = None

    @property
    def recipe_holds(self):
        return (self.p1_min_slack >= -ALGEBRAIC_SLACK
                and self.p2_min_slack >= -ALGEBRAIC_SLACK
                and self.p3_empirical_lambda_min > 0)

    @property
    def passed(self):
        flags = [self.recipe_holds]
        if self.lyapunov_monotone is not None:
            flags.append(self.lyapunov_monotone)
        if self.rate_bound_holds is not None:
            flags.append(self.rate_bound_holds)
        return all(flags)

    def to_dict(self):
        d = asdict(self)
        d["recipe_holds"] = self.recipe_holds
        d["passed"] = self.passed
        return d

    def to_json(self):
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            return v
        return json.dumps({k: clean(v) for k, v in self.to_dict().items()}, indent=2)


@dataclass
class RateReport:
    holds: bool
    worst_slack: float
    bounds: np.ndarray = field(repr=False)
    p_min: np.ndarray = field(repr=False)
    decay_slope: float = math.nan


def _window_of(trace):
    cfg = getattr(trace, "config", None)
    if isinstance(cfg, SolverConfig):
        return max(cfg.memory, 2)
    return None


def check_recipe(trace, pi, nu, window=None):
    """Evaluate the growth cap, curvature cap and scaled-stepsize bound.

    For every ``k`` with a successor stepsize the slacks
    ``1 + pi rho_k - pi rho_{k+1}^2`` and
    ``1/2 - rho_{k+1}^2 [gamma_k^2 L_k^2 - (2-pi) gamma_k ell_k + 1 - pi]``
    are computed; their minima are reported. At every decrease
    ``gamma_{k+1} < gamma_k`` the best witness
    ``max_j min(gamma_j, gamma_{k+1}) / ||x^j - x^{j-1}||^(1-nu)`` over the
    last ``window`` indices ``j <= k`` is taken, and the run-wide minimum is
    the empirical ``lambda_min`` (``inf`` without decrease events).

    ``window`` defaults to ``max(memory, 2)`` from the trace config, or the
    whole history when the trace carries no config.
    """
    recs = trace.records
    if len(recs) < 2:
        raise InsufficientTrace("need at least two trace rows")
    gamma = np.array([r.gamma for r in recs])
    rho = np.array([r.rho for r in recs])
    ell = np.array([r.ell for r in recs])
    big_l = np.array([r.big_l for r in recs])
    step = np.array([r.step_norm for r in recs])

    g_k, g_next = gamma[:-1], gamma[1:]
    rho_next = g_next / g_k
    p1 = 1.0 + pi * rho[:-1] - pi * rho_next ** 2
    bracket = g_k ** 2 * big_l[:-1] ** 2 - (2.0 - pi) * g_k * ell[:-1] + 1.0 - pi
    p2 = 0.5 - rho_next ** 2 * bracket

    if window is None:
        window = _window_of(trace)
    exponent = 1.0 - nu
    lam_min = math.inf
    events = 0
    for i in np.nonzero(g_next < g_k)[0]:
        events += 1
        lo = 0 if window is None else max(0, i - window + 1)
        js = slice(lo, i + 1)
        scale = step[js] ** exponent if exponent else 1.0
        witness = np.max(np.minimum(gamma[js], g_next[i]) / scale)
        lam_min = min(lam_min, float(witness))

    return RecipeReport(
        p1_min_slack=float(np.min(p1)),
        p2_min_slack=float(np.min(p2)),
        p3_empirical_lambda_min=lam_min,
        decrease_events=events,
    )


def _snapshots(trace):
    snaps = getattr(trace, "snapshots", None)
    if snaps is None or len(snaps) != len(trace.records) + 1:
        raise MissingIterates("trace has no iterate snapshots; rerun with snapshots enabled")
    return np.asarray(snaps, dtype=float)


def lyapunov_sequence(trace, x_star, pi, phi_star):
    """``U_k = 1/2 ||x^k - x*||^2 + 1/2 ||x^k - x^{k-1}||^2
    + gamma_k (1 + pi rho_k) P_{k-1}`` for ``k = 1..K``, with
    ``P_{k-1} = phi(x^{k-1}) - phi_star``."""
    X = _snapshots(trace)
    if x_star is None or phi_star is None:
        raise MissingOptimum("x_star and phi_star are required")
    x_star = np.asarray(x_star, dtype=float)
    objectives = np.concatenate([[trace.objective0], [r.objective for r in trace.records]])
    P = objectives - phi_star
    gamma = np.array([r.gamma for r in trace.records])
    rho = np.array([r.rho for r in trace.records])
    dist = 0.5 * np.sum((X[1:] - x_star) ** 2, axis=1)
    steps = 0.5 * np.sum((X[1:] - X[:-1]) ** 2, axis=1)
    return dist + steps + gamma * (1.0 + pi * rho) * P[:-1]


def check_lyapunov(trace, x_star, phi_star, pi, rel=RELATIVE_SLACK):
    """Return ``(monotone, worst_violation)`` for ``U_{k+1} <= U_k +
    rel (1 + U_k)``."""
    U = lyapunov_sequence(trace, x_star, pi, phi_star)
    if U.size < 2:
        return True, 0.0
    excess = U[1:] - U[:-1] - rel * (1.0 + np.abs(U[:-1]))
    worst = float(np.max(U[1:] - U[:-1]))
    return bool(np.all(excess <= 0)), worst


def decay_slope(p_min, decades=2.0):
    """Least-squares slope of ``log P_min`` against ``log(K+1)`` over the
    final ``decades`` decades of iterations (positive values only)."""
    p_min = np.asarray(p_min, dtype=float)
    K = np.arange(1, p_min.size + 1)
    start = max(1, int(p_min.size / 10 ** decades))
    mask = (K >= start) & (p_min > 0)
    if mask.sum() < 3:
        return math.nan
    slope, _ = np.polyfit(np.log(K[mask] + 1.0), np.log(p_min[mask]), 1)
    return float(slope)


def check_rate_bounds(trace, U1, nu=1.0, phi_star=None, rel=RELATIVE_SLACK):
    """Check ``P_K^min <= U1 / sum_{k=1}^{K+1} gamma_k`` for every ``K``
    with a known successor stepsize.

    ``U1`` is the first Lyapunov value (see :func:`lyapunov_sequence`) and
    ``P_K^min`` runs over ``P_0..P_K``. Also fits the log-log decay slope of
    ``P_K^min``, to be compared with ``-nu``.
    """
    if phi_star is None or U1 is None:
        raise MissingOptimum("reference optimum required for rate bounds")
    U1 = float(U1)
    P = np.array([r.objective for r in trace.records]) - phi_star
    P0 = trace.objective0 - phi_star if math.isfinite(trace.objective0) else math.inf
    p_min = np.minimum.accumulate(np.minimum(P, P0))
    gamma = np.array([r.gamma for r in trace.records])
    # K = 1..len-1 uses gamma_1..gamma_{K+1}
    bounds = U1 / np.cumsum(gamma)[1:]
    slack = bounds - p_min[:-1]
    holds = bool(np.all(slack >= -rel * abs(U1))) if slack.size else True
    worst = float(np.min(slack)) if slack.size else math.inf
    return RateReport(holds=holds, worst_slack=worst, bounds=bounds, p_min=p_min,
                      decay_slope=decay_slope(p_min))


def reference_solution(problem, config=None, factor=100.0, max_iters=1_000_000, rule="aa", x0=None):
    """High-accuracy pre-solve: ``(x_star, phi_star)``.

    Runs the safeguarded solver at ``factor`` times tighter tolerance and
    returns the iterate with the lowest objective seen along the way.
    """
    base = config or SolverConfig()
    cfg = SolverConfig(pi=base.pi, nu=base.nu, memory=base.memory, rule=rule,
                       tol=base.tol / factor, max_iters=max_iters, aa_nu_mode=base.aa_nu_mode)
    best = {"phi": math.inf, "x": None}

    def keep_best(record, state):
        if record.objective < best["phi"]:
            best["phi"] = record.objective
            best["x"] = state.x_curr.copy()

    trace = run(problem, cfg, x0=x0, callback=keep_best)
    if best["x"] is None:
        best["x"], best["phi"] = trace.x_final, problem.objective(trace.x_final)
    return best["x"], float(best["phi"])
