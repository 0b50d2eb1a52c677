"""Problem families: lasso, l1-logistic regression, cubic regularization and
a p-norm regression family whose gradient is only (p-1)-Hölder."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.special import expit

from .core import CompositeProblem

__all__ = [
    "SparseDesign",
    "InstanceSpec",
    "FAMILIES",
    "soft_threshold",
    "lasso_problem",
    "logreg_problem",
    "cubic_problem",
    "logistic_model_at_zero",
    "pnorm_problem",
    "default_instance",
    "generate_instance",
    "problem_from_design",
    "check_gradient",
    "support_size",
]

FAMILIES = ("lasso", "logreg", "cubic", "p-norm")


@dataclass
class SparseDesign:
    """Row-major sparse design: ``rows[i]`` is a list of ``(col, value)``
    pairs with 0-based, strictly increasing columns."""

    rows: list
    labels: np.ndarray
    n_cols: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=float)
        if len(self.rows) != self.labels.shape[0]:
            raise ValueError("number of rows and labels differ")
        for i, row in enumerate(self.rows):
            for j, v in row:
                if not 0 <= j < self.n_cols:
                    raise ValueError(f"row {i}: column index {j} outside [0, {self.n_cols})")
                if not math.isfinite(v):
                    raise ValueError(f"row {i}: non-finite value at column {j}")

    @property
    def n_rows(self):
        return len(self.rows)

    def to_csr(self):
        indptr = [0]
        indices, data = [], []
        for row in self.rows:
            for j, v in row:
                indices.append(j)
                data.append(v)
            indptr.append(len(indices))
        return sparse.csr_matrix(
            (np.asarray(data, dtype=float), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
            shape=(self.n_rows, self.n_cols),
        )

    def to_dense(self):
        return self.to_csr().toarray()

    @classmethod
    def from_matrix(cls, A, labels):
        A = sparse.csr_matrix(A)
        A.sort_indices()
        rows = []
        for i in range(A.shape[0]):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            rows.append([(int(j), float(v)) for j, v in zip(A.indices[lo:hi], A.data[lo:hi])])
        return cls(rows=rows, labels=labels, n_cols=A.shape[1])


@dataclass
class InstanceSpec:
    family: str = "lasso"
    rows: int = 200
    cols: int = 500
    lam: Optional[float] = None
    M: float = 0.01
    p: float = 1.5
    seed: int = 0
    sparsity: Optional[int] = None
    noise: Optional[float] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be positive")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not self.M > 0:
            raise ValueError("M must be positive")
        if not 1.0 < self.p <= 2.0:
            raise ValueError("p must lie in (1, 2]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def as_dict(self):
        return asdict(self)


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _l1_parts(lam, n):
    def value(x):
        return lam * float(np.abs(x).sum())

    def prox(x, gamma):
        return soft_threshold(x, gamma * lam)

    return value, prox


def _check_shapes(A, b):
    if A.ndim != 2:
        raise ValueError("A must be a matrix")
    if b.shape != (A.shape[0],):
        raise ValueError(f"b has shape {b.shape}, expected ({A.shape[0]},)")


def _as_operator(A):
    return A if sparse.issparse(A) else np.asarray(A, dtype=float)


def lasso_problem(A, b, lam, name="lasso"):
    """``1/2 ||Ax - b||^2 + lam ||x||_1``."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    A = _as_operator(A)
    b = np.asarray(b, dtype=float)
    _check_shapes(A, b)
    g_value, g_prox = _l1_parts(lam, A.shape[1])

    def f(x):
        r = A @ x - b
        return 0.5 * float(r @ r)

    def grad(x):
        return A.T @ (A @ x - b)

    return CompositeProblem(f, grad, g_value, g_prox, A.shape[1], 1.0, name)


def logreg_problem(A, b, lam, name="logreg"):
    """``sum_i log(1 + exp(-b_i <a_i, x>)) + lam ||x||_1`` with labels in
    ``{-1, +1}``."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    A = _as_operator(A)
    b = np.asarray(b, dtype=float)
    _check_shapes(A, b)
    if not np.all(np.isin(b, (-1.0, 1.0))):
        raise ValueError("logistic labels must be -1 or +1")
    g_value, g_prox = _l1_parts(lam, A.shape[1])

    def f(x):
        z = -b * (A @ x)
        # log(1 + e^z) without overflow
        return float(np.sum(np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))))

    def grad(x):
        z = -b * (A @ x)
        return A.T @ (-b * expit(z))

    return CompositeProblem(f, grad, g_value, g_prox, A.shape[1], 1.0, name)


def logistic_model_at_zero(A, b):
    """Hessian and gradient of the logistic loss at ``x = 0``:
    ``H = A^T A / 4`` and ``grad = -A^T b / 2``."""
    A = _as_operator(A)
    b = np.asarray(b, dtype=float)
    AtA = A.T @ A
    H = np.asarray(AtA.toarray() if sparse.issparse(AtA) else AtA) / 4.0
    bvec = -0.5 * np.asarray(A.T @ b).ravel()
    return H, bvec


def cubic_problem(H, bvec, M, name="cubic"):
    """``<bvec, x> + 1/2 <Hx, x> + M/6 ||x||^3`` with ``g = 0``."""
    H = np.asarray(H, dtype=float)
    bvec = np.asarray(bvec, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or bvec.shape != (H.shape[0],):
        raise ValueError("H must be square and match bvec")
    if not np.allclose(H, H.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(H).max(initial=0.0))):
        raise ValueError("H must be symmetric")
    if not M > 0:
        raise ValueError("M must be positive")

    def f(x):
        nx = np.linalg.norm(x)
        return float(bvec @ x + 0.5 * x @ (H @ x) + M / 6.0 * nx ** 3)

    def grad(x):
        return bvec + H @ x + 0.5 * M * np.linalg.norm(x) * x

    def zero(x):
        return 0.0

    def identity(x, gamma):
        return np.array(x, dtype=float)

    return CompositeProblem(f, grad, zero, identity, H.shape[0], 1.0, name)


def pnorm_problem(A, b, p, lam, name="p-norm"):
    """``1/p sum_i |<a_i, x> - b_i|^p + lam ||x||_1``; the gradient is
    ``(p-1)``-Hölder continuous."""
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got {p}")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    A = _as_operator(A)
    b = np.asarray(b, dtype=float)
    _check_shapes(A, b)
    g_value, g_prox = _l1_parts(lam, A.shape[1])

    def f(x):
        r = np.abs(A @ x - b)
        return float(np.sum(r ** p)) / p

    def grad(x):
        r = A @ x - b
        return A.T @ (np.sign(r) * np.abs(r) ** (p - 1.0))

    return CompositeProblem(f, grad, g_value, g_prox, A.shape[1], p - 1.0, name)


def support_size(x, atol=0.0):
    return int(np.count_nonzero(np.abs(x) > atol))


def _default_lam(spec, rows):
    if spec.lam is not None:
        return float(spec.lam)
    if spec.family == "logreg":
        return 0.1 / rows
    if spec.family == "p-norm":
        return 0.0
    return 0.1


_DEFAULT_DIMS = {"lasso": (200, 500), "logreg": (200, 50), "cubic": (40, 50), "p-norm": (100, 50)}


def default_instance(family, seed=0):
    """Desk-scale instance for each family."""
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    rows, cols = _DEFAULT_DIMS[family]
    return InstanceSpec(family=family, rows=rows, cols=cols, seed=seed)


def generate_instance(spec):
    """Build a seeded instance; the same spec always gives the same data.

    Returns ``(problem, meta)`` where ``meta`` holds the raw data (``A``,
    ``b`` and, for the cubic family, ``H`` and ``bvec``) plus generator
    details such as the planted signal.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    m, n = spec.rows, spec.cols
    lam = _default_lam(spec, m)
    A = rng.standard_normal((m, n))
    meta = {"spec": spec.as_dict(), "lam": lam, "A": A}

    if spec.family in ("lasso", "p-norm"):
        k = spec.sparsity if spec.sparsity is not None else max(1, n // 50)
        x_hat = np.zeros(n)
        support = rng.choice(n, size=min(k, n), replace=False)
        x_hat[np.sort(support)] = rng.standard_normal(support.size)
        default_noise = 0.01 if spec.family == "lasso" else 0.0
        sigma = spec.noise if spec.noise is not None else default_noise
        b = A @ x_hat + sigma * rng.standard_normal(m)
        meta.update(b=b, planted=x_hat, planted_support=int(np.count_nonzero(x_hat)))
        if spec.family == "lasso":
            meta["zero_threshold"] = float(np.abs(A.T @ b).max())
            return lasso_problem(A, b, lam), meta
        return pnorm_problem(A, b, spec.p, lam), meta

    # logistic design: labels from a planted classifier with 10% flips
    w = rng.standard_normal(n) / math.sqrt(n)
    b = np.sign(A @ w + 1e-12)
    b[b == 0] = 1.0
    flips = rng.random(m) < (spec.noise if spec.noise is not None else 0.1)
    b[flips] *= -1.0
    meta.update(b=b, planted=w)
    if spec.family == "logreg":
        return logreg_problem(A, b, lam), meta
    H, bvec = logistic_model_at_zero(A, b)
    meta.update(H=H, bvec=bvec, M=spec.M)
    return cubic_problem(H, bvec, spec.M), meta


def problem_from_design(family, design, lam=None, M=0.01, p=1.5):
    """Instantiate a family on user data (e.g. a parsed LIBSVM file)."""
    A = design.to_csr() if isinstance(design, SparseDesign) else design
    b = design.labels
    rows = A.shape[0]
    if family == "lasso":
        return lasso_problem(A, b, 0.1 if lam is None else lam)
    if family == "logreg":
        return logreg_problem(A, b, 0.1 / rows if lam is None else lam)
    if family == "cubic":
        H, bvec = logistic_model_at_zero(A, b)
        return cubic_problem(H, bvec, M)
    if family == "p-norm":
        return pnorm_problem(A, b, p, 0.0 if lam is None else lam)
    raise ValueError(f"unknown family {family!r}")


def check_gradient(problem, points, h=1e-6):
    """Largest relative error between ``smooth_gradient`` and central
    differences along random unit directions, over ``points``."""
    rng = np.random.default_rng(12345)
    worst = 0.0
    for x in points:
        g = problem.smooth_gradient(x)
        d = rng.standard_normal(problem.dimension)
        d /= np.linalg.norm(d)
        fd = (problem.smooth_value(x + h * d) - problem.smooth_value(x - h * d)) / (2 * h)
        an = float(g @ d)
        scale = max(abs(an), abs(fd), np.linalg.norm(g) * 1e-3, 1e-8)
        worst = max(worst, abs(fd - an) / scale)
    return worst
