"""Safeguarded adaptive proximal-gradient solver.

The loop follows the usual indexing: ``x[k+1] = prox_{gamma[k+1] g}(x[k] -
gamma[k+1] * grad f(x[k]))``. At every iteration the adaPG update supplies a
certified stepsize; a pluggable fast rule may propose something else and the
smaller of the two is taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

__all__ = [
    "CompositeProblem",
    "IterateState",
    "LocalEstimates",
    "SolverConfig",
    "StepRecord",
    "Trace",
    "ZeroStep",
    "NonFiniteIterate",
    "local_estimates",
    "adapg_candidate",
    "safeguarded_gamma",
    "prox_gradient_step",
    "fixed_point_residual",
    "initial_stepsize",
    "run",
]

BRANCH_FAST = "fast"
BRANCH_SAFE = "safe"
BRANCH_TIE = "tie"
BRANCH_INIT = "init"


class ZeroStep(ArithmeticError):
    """Raised when two consecutive iterates coincide (exact fixed point)."""


class NonFiniteIterate(FloatingPointError):
    """Raised when an iterate or gradient picks up a nan/inf entry."""


@dataclass(frozen=True)
class CompositeProblem:
    """``minimize f(x) + g(x)`` given through oracles.

    ``prox(x, gamma)`` must return the minimizer of
    ``g(w) + ||w - x||^2 / (2 gamma)``.
    """

    smooth_value: Callable[[np.ndarray], float]
    smooth_gradient: Callable[[np.ndarray], np.ndarray]
    nonsmooth_value: Callable[[np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray]
    dimension: int
    holder_exponent_hint: float = 1.0
    name: str = "problem"

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if not 0.0 < self.holder_exponent_hint <= 1.0:
            raise ValueError("holder_exponent_hint must lie in (0, 1]")

    def objective(self, x):
        return float(self.smooth_value(x)) + float(self.nonsmooth_value(x))


@dataclass
class IterateState:
    x_curr: np.ndarray
    x_prev: np.ndarray
    grad_curr: np.ndarray
    grad_prev: np.ndarray
    gamma_curr: float
    gamma_prev: float
    k: int = 1

    @property
    def rho(self):
        return self.gamma_curr / self.gamma_prev


@dataclass(frozen=True)
class LocalEstimates:
    """Curvature estimates built from one pair ``s = x[k] - x[k-1]``,
    ``y = grad f(x[k]) - grad f(x[k-1])``.

    ``ell = <y,s>/||s||^2``, ``big_l = ||y||/||s||`` and
    ``c = ||y||^2/<y,s>`` (``inf`` when ``<y,s> = 0``). The ``scaled_*``
    fields rescale by ``||s||^(1-nu)`` for the Hölder setting.
    """

    ell: float
    big_l: float
    c: float
    step_norm: float
    scaled_ell: float
    scaled_big_l: float
    scaled_lambda: float
    dot_sy: float = math.nan
    norm_s_sq: float = math.nan
    norm_y_sq: float = math.nan


@dataclass
class SolverConfig:
    pi: float = 1.2
    nu: float = 1.0
    gamma0: Optional[float] = None
    memory: int = 4
    rule: str = "adapg"
    tol: float = 1e-10
    max_iters: int = 10_000
    track_lyapunov: bool = False
    aa_nu_mode: str = "aggregate"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (1.0 <= self.pi <= 2.0):
            raise ValueError(f"pi must lie in [1, 2], got {self.pi}")
        if not (0.0 < self.nu <= 1.0):
            raise ValueError(f"nu must lie in (0, 1], got {self.nu}")
        if self.gamma0 is not None and not self.gamma0 > 0:
            raise ValueError(f"gamma0 must be positive, got {self.gamma0}")
        if int(self.memory) != self.memory or self.memory < 1:
            raise ValueError(f"memory must be an integer >= 1, got {self.memory}")
        if not self.tol >= 0:
            raise ValueError(f"tol must be nonnegative, got {self.tol}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters}")
        if self.aa_nu_mode not in ("aggregate", "per-pair"):
            raise ValueError(f"aa_nu_mode must be 'aggregate' or 'per-pair', got {self.aa_nu_mode!r}")

    def as_dict(self):
        return asdict(self)


@dataclass
class StepRecord:
    """One row of a trace, describing iterate ``x[k]``.

    ``gamma`` is the stepsize that produced ``x[k]``; ``branch``,
    ``gamma_safe`` and ``gamma_fast`` tell how it was selected.
    """

    k: int
    gamma: float
    rho: float
    ell: float
    big_l: float
    c: float
    residual: float
    objective: float
    branch: str
    step_norm: float = math.nan
    gamma_safe: float = math.nan
    gamma_fast: float = math.nan


@dataclass
class Trace:
    records: list = field(default_factory=list)
    config: Optional[SolverConfig] = None
    problem: str = ""
    rule: str = ""
    status: str = "running"
    gamma0: float = math.nan
    objective0: float = math.nan
    x_final: Optional[np.ndarray] = None
    snapshots: Optional[list] = None

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def gammas(self):
        return self.column("gamma")

    @property
    def residuals(self):
        return self.column("residual")

    @property
    def best_residuals(self):
        return np.minimum.accumulate(self.residuals) if self.records else np.empty(0)

    @property
    def iterations(self):
        return self.records[-1].k if self.records else 0

    @property
    def converged(self):
        return self.status == "converged"

    def evals_to_reach(self, level):
        """Iteration count at which the best residual first drops below
        ``level``; ``None`` if it never does."""
        hits = np.nonzero(self.residuals <= level)[0]
        return int(self.records[hits[0]].k) if hits.size else None


def local_estimates(s, y, gamma, nu):
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    norm_s_sq = float(s @ s)
    if norm_s_sq == 0.0:
        raise ZeroStep("zero displacement between consecutive iterates")
    norm_y_sq = float(y @ y)
    dot_sy = float(s @ y)
    step_norm = math.sqrt(norm_s_sq)
    ell = dot_sy / norm_s_sq
    big_l = math.sqrt(norm_y_sq) / step_norm
    # exact zero only: the safeguard does not need c
    c = norm_y_sq / dot_sy if dot_sy != 0.0 else math.inf
    scale = step_norm ** (1.0 - nu)
    return LocalEstimates(
        ell=ell,
        big_l=big_l,
        c=c,
        step_norm=step_norm,
        scaled_ell=ell * scale,
        scaled_big_l=big_l * scale,
        scaled_lambda=gamma / scale,
        dot_sy=dot_sy,
        norm_s_sq=norm_s_sq,
        norm_y_sq=norm_y_sq,
    )


def adapg_candidate(gamma_k, gamma_km1, ell, big_l, pi):
    """adaPG stepsize update.

    Returns ``min(gamma_k * sqrt(1/pi + gamma_k/gamma_km1),
    gamma_k / sqrt(2 [gamma_k^2 L^2 - (2 - pi) gamma_k ell + 1 - pi]_+))``;
    a nonpositive bracket drops the second term.
    """
    growth = gamma_k * math.sqrt(1.0 / pi + gamma_k / gamma_km1)
    bracket = gamma_k * gamma_k * big_l * big_l - (2.0 - pi) * gamma_k * ell + 1.0 - pi
    if bracket <= 0.0:
        return growth
    return min(growth, gamma_k / math.sqrt(2.0 * bracket))


def safeguarded_gamma(gamma_safe, gamma_fast):
    if gamma_fast < gamma_safe:
        return gamma_fast, BRANCH_FAST
    if gamma_safe < gamma_fast:
        return gamma_safe, BRANCH_SAFE
    return gamma_safe, BRANCH_TIE


def prox_gradient_step(problem, x, grad, gamma):
    if not gamma > 0:
        raise ValueError(f"stepsize must be positive, got {gamma}")
    return np.asarray(problem.prox(x - gamma * grad, gamma), dtype=float)


def fixed_point_residual(state):
    s = state.x_curr - state.x_prev
    y = state.grad_curr - state.grad_prev
    return float(np.linalg.norm(s / state.gamma_curr - y))


def initial_stepsize(problem, x0, grad0=None):
    """Secant guess ``||x0 - xe|| / ||grad(x0) - grad(xe)||`` with
    ``xe = x0 - eps grad(x0)``; ``1e-2`` when the denominator vanishes."""
    if grad0 is None:
        grad0 = problem.smooth_gradient(x0)
    eps = 1e-6 * (1.0 + np.linalg.norm(x0))
    xe = x0 - eps * grad0
    num = np.linalg.norm(x0 - xe)
    den = np.linalg.norm(grad0 - problem.smooth_gradient(xe))
    if den == 0.0 or not np.isfinite(den) or num == 0.0:
        return 1e-2
    return float(num / den)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteIterate("non-finite entry in iterate or gradient")


def run(problem, config=None, rule=None, x0=None, snapshots=False, callback=None):
    """Run safeguarded proximal-gradient iterations.

    Parameters
    ----------
    problem : CompositeProblem
    config : SolverConfig, optional
        Defaults to ``SolverConfig()``.
    rule : str or callable, optional
        Fast stepsize oracle ``rule(history, estimates, gamma_k, nu)``; a
        string is looked up in :data:`adasafe.stepsizes.RULES`. Defaults to
        ``config.rule``.
    x0 : array_like, optional
        Starting point, zero vector by default.
    snapshots : bool
        Keep every iterate in ``trace.snapshots`` (needed for Lyapunov and
        rate checks). Also enabled by ``config.track_lyapunov``.
    callback : callable, optional
        Called as ``callback(record, state)`` after each recorded iteration.

    Returns
    -------
    Trace
        ``status`` is ``"converged"`` (residual below ``tol`` or exact fixed
        point) or ``"maxiter"``.

    Raises
    ------
    NonFiniteIterate
        If an iterate or gradient becomes non-finite.
    """
    from .stepsizes import PairHistory, resolve_rule

    config = config or SolverConfig()
    config.validate()
    rule_fn = resolve_rule(rule if rule is not None else config.rule, config)
    rule_name = rule if isinstance(rule, str) else (config.rule if rule is None else getattr(rule, "__name__", "custom"))
    pi, nu = config.pi, config.nu
    keep = snapshots or config.track_lyapunov

    x_prev = np.zeros(problem.dimension) if x0 is None else np.array(x0, dtype=float)
    if x_prev.shape != (problem.dimension,):
        raise ValueError(f"x0 has shape {x_prev.shape}, expected ({problem.dimension},)")
    g_prev = np.asarray(problem.smooth_gradient(x_prev), dtype=float)
    _check_finite(x_prev, g_prev)
    gamma0 = config.gamma0 if config.gamma0 is not None else initial_stepsize(problem, x_prev, g_prev)

    trace = Trace(config=config, problem=problem.name, rule=rule_name,
                  gamma0=gamma0, objective0=problem.objective(x_prev))
    if keep:
        trace.snapshots = [x_prev.copy()]

    # gamma_1 = gamma_0, so rho_1 = 1
    gamma_prev, gamma = gamma0, gamma0
    branch, g_safe, g_fast = BRANCH_INIT, math.nan, math.nan
    x = prox_gradient_step(problem, x_prev, g_prev, gamma)
    history = PairHistory(memory=config.memory, nu=nu)
    k = 1
    while True:
        grad = np.asarray(problem.smooth_gradient(x), dtype=float)
        _check_finite(x, grad)
        if keep:
            trace.snapshots.append(x.copy())
        state = IterateState(x, x_prev, grad, g_prev, gamma, gamma_prev, k)
        s = x - x_prev
        y = grad - g_prev
        try:
            est = local_estimates(s, y, gamma, nu)
        except ZeroStep:
            est = None
        residual = fixed_point_residual(state)
        record = StepRecord(
            k=k, gamma=gamma, rho=gamma / gamma_prev,
            ell=est.ell if est else math.nan,
            big_l=est.big_l if est else math.nan,
            c=est.c if est else math.nan,
            residual=residual,
            objective=problem.objective(x),
            branch=branch,
            step_norm=est.step_norm if est else 0.0,
            gamma_safe=g_safe, gamma_fast=g_fast,
        )
        trace.records.append(record)
        if callback is not None:
            callback(record, state)
        if est is None or residual <= config.tol:
            trace.status = "converged"
            break
        if k >= config.max_iters:
            trace.status = "maxiter"
            break

        history.push(s, y, gamma, est)
        g_safe = adapg_candidate(gamma, gamma_prev, est.ell, est.big_l, pi)
        g_fast = rule_fn(history, est, gamma, nu) if len(history) >= config.memory else math.inf
        gamma_next, branch = safeguarded_gamma(g_safe, g_fast)

        x_next = prox_gradient_step(problem, x, grad, gamma_next)
        x_prev, g_prev = x, grad
        x = x_next
        gamma_prev, gamma = gamma, gamma_next
        k += 1

    trace.x_final = x
    return trace
