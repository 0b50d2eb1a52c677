"""LIBSVM parsing, run configuration files and trace persistence."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .core import SolverConfig, StepRecord, Trace
from .problems import FAMILIES, InstanceSpec, SparseDesign, default_instance
from .stepsizes import RULES

__all__ = [
    "ParseError",
    "ConfigError",
    "RunConfig",
    "parse_libsvm",
    "read_libsvm",
    "format_libsvm",
    "write_libsvm",
    "remap_binary_labels",
    "TRACE_COLUMNS",
    "write_trace",
    "read_trace",
    "write_snapshots",
    "read_snapshots",
    "write_optimum",
    "read_optimum",
    "read_config",
    "parse_config",
]

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("k", "gamma", "rho", "ell", "L", "c", "residual", "best_residual",
                 "objective", "gamma_cumavg", "branch")


class ParseError(ValueError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class ConfigError(ValueError):
    def __init__(self, path, reason):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}" if path else reason)


def parse_libsvm(stream, n_cols=None):
    """Parse ``<label> <idx>:<val> ...`` lines (1-based, strictly increasing
    indices) from an iterable of strings. Blank lines and ``#`` comments are
    skipped."""
    rows, labels = [], []
    max_col = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(lineno, f"bad label {tokens[0]!r}") from None
        if not math.isfinite(label):
            raise ParseError(lineno, "non-finite label")
        row = []
        last = 0
        for tok in tokens[1:]:
            idx, sep, val = tok.partition(":")
            if not sep:
                raise ParseError(lineno, f"expected <index>:<value>, got {tok!r}")
            try:
                j = int(idx)
                v = float(val)
            except ValueError:
                raise ParseError(lineno, f"malformed token {tok!r}") from None
            if j < 1:
                raise ParseError(lineno, f"index {j} is not 1-based")
            if j <= last:
                raise ParseError(lineno, f"indices must be strictly increasing ({j} after {last})")
            if not math.isfinite(v):
                raise ParseError(lineno, f"non-finite value in {tok!r}")
            row.append((j - 1, v))
            last = j
        max_col = max(max_col, last)
        rows.append(row)
        labels.append(label)
    if n_cols is None:
        n_cols = max(max_col, 1)
    elif n_cols < max_col:
        raise ParseError(0, f"index {max_col} exceeds declared dimension {n_cols}")
    return SparseDesign(rows=rows, labels=np.asarray(labels, dtype=float), n_cols=n_cols)


def read_libsvm(path, n_cols=None):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm(fh, n_cols=n_cols)


def _num(v):
    return format(float(v), ".17g")


def format_libsvm(design):
    lines = []
    for label, row in zip(design.labels, design.rows):
        parts = [_num(label)] + [f"{j + 1}:{_num(v)}" for j, v in row]
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def write_libsvm(design, path):
    Path(path).write_text(format_libsvm(design), encoding="utf-8")


def remap_binary_labels(labels):
    """Map labels to ``{-1, +1}``: the smallest label becomes ``-1`` and all
    others ``+1``. Logs a warning when anything changes."""
    labels = np.asarray(labels, dtype=float)
    if np.all(np.isin(labels, (-1.0, 1.0))):
        return labels
    lo = labels.min()
    out = np.where(labels == lo, -1.0, 1.0)
    log.warning("labels %s remapped to -1/+1 (minimum label %g -> -1)",
                sorted(set(labels.tolist()))[:5], lo)
    return out


def write_trace(trace, path):
    """Write one CSV row per iteration with 17 significant digits."""
    path = Path(path)
    gammas = trace.gammas
    cumavg = np.cumsum(gammas) / np.arange(1, gammas.size + 1) if gammas.size else gammas
    best = trace.best_residuals
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for i, r in enumerate(trace.records):
                w.writerow([r.k, _num(r.gamma), _num(r.rho), _num(r.ell), _num(r.big_l), _num(r.c),
                            _num(r.residual), _num(best[i]), _num(r.objective), _num(cumavg[i]),
                            r.branch])
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc


def _recover_step_norm(gamma, ell, big_l, residual):
    # r^2 = ||s||^2 (1/gamma^2 - 2 ell/gamma + L^2)
    q = 1.0 / gamma ** 2 - 2.0 * ell / gamma + big_l ** 2
    if not (q > 0 and math.isfinite(q)):
        return math.nan
    return residual / math.sqrt(q)


def read_trace(path):
    """Load a CSV written by :func:`write_trace`.

    ``step_norm`` is not stored; it is recovered from the residual, or taken
    from a snapshot file via :func:`read_snapshots`.
    """
    path = Path(path)
    trace = Trace(problem=path.stem)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read trace {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_COLUMNS:
            raise ParseError(1, f"unexpected trace header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_COLUMNS):
                raise ParseError(lineno, f"expected {len(TRACE_COLUMNS)} fields, got {len(row)}")
            try:
                vals = dict(zip(TRACE_COLUMNS, row))
                gamma, ell, big_l = float(vals["gamma"]), float(vals["ell"]), float(vals["L"])
                residual = float(vals["residual"])
                rec = StepRecord(
                    k=int(vals["k"]), gamma=gamma, rho=float(vals["rho"]), ell=ell, big_l=big_l,
                    c=float(vals["c"]), residual=residual, objective=float(vals["objective"]),
                    branch=vals["branch"],
                    step_norm=_recover_step_norm(gamma, ell, big_l, residual),
                )
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
            trace.records.append(rec)
    trace.status = "unknown"
    return trace


def write_snapshots(trace, path):
    if trace.snapshots is None:
        raise ValueError("trace carries no snapshots")
    with open(path, "wb") as fh:
        np.savez(fh, x=np.asarray(trace.snapshots), objective0=trace.objective0,
                 gamma0=trace.gamma0)


def read_snapshots(path, trace=None):
    """Load iterates; when ``trace`` is given, attach them and refresh the
    per-row step norms."""
    with np.load(path) as data:
        X = data["x"]
        objective0 = float(data["objective0"])
        gamma0 = float(data["gamma0"])
    if trace is not None:
        if X.shape[0] != len(trace.records) + 1:
            raise ValueError(f"{path}: {X.shape[0]} snapshots for {len(trace.records)} trace rows")
        trace.snapshots = list(X)
        trace.objective0 = objective0
        trace.gamma0 = gamma0
        norms = np.linalg.norm(np.diff(X, axis=0), axis=1)
        for rec, n in zip(trace.records, norms):
            rec.step_norm = float(n)
    return X, objective0, gamma0


def write_optimum(x, objective, path):
    Path(path).write_text(json.dumps({"x": [float(v) for v in x], "objective": float(objective)}),
                          encoding="utf-8")


def read_optimum(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return np.asarray(data["x"], dtype=float), float(data["objective"])
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(str(path), f"cannot read optimum: {exc}") from None


@dataclass
class RunConfig:
    """Solver settings plus everything needed to build and run a problem."""

    problem: str = "lasso"
    rule: str = "adapg"
    pi: float = 1.2
    nu: Optional[float] = None
    gamma0: Optional[float] = None
    memory: int = 4
    tol: float = 1e-10
    max_iters: int = 10_000
    aa_nu_mode: str = "aggregate"
    track_lyapunov: bool = False
    data: Optional[str] = None
    n_features: Optional[int] = None
    instance: Optional[dict] = None
    lam: Optional[float] = None
    M: float = 0.01
    p: float = 1.5
    seed: int = 0
    out: Optional[str] = None
    snapshots: bool = False
    jobs: int = 1

    def solver_config(self, nu_hint=1.0):
        return SolverConfig(pi=self.pi, nu=self.nu if self.nu is not None else nu_hint,
                            gamma0=self.gamma0, memory=self.memory, rule=self.rule, tol=self.tol,
                            max_iters=self.max_iters, track_lyapunov=self.track_lyapunov,
                            aa_nu_mode=self.aa_nu_mode)

    def instance_spec(self):
        base = default_instance(self.problem, self.seed).as_dict()
        base.update(M=self.M, p=self.p)
        if self.lam is not None:
            base["lam"] = self.lam
        if self.instance:
            base.update(self.instance)
        base["family"] = self.problem
        return InstanceSpec(**base)

    def as_dict(self):
        return asdict(self)


_TYPES = {
    "problem": str, "rule": str, "pi": float, "nu": float, "gamma0": float, "memory": int,
    "tol": float, "max_iters": int, "aa_nu_mode": str, "track_lyapunov": bool, "data": str,
    "n_features": int, "instance": dict, "lam": float, "M": float, "p": float, "seed": int, "out": str,
    "snapshots": bool, "jobs": int,
}

_INSTANCE_TYPES = {
    "family": str, "rows": int, "cols": int, "lam": float, "M": float, "p": float,
    "seed": int, "sparsity": int, "noise": float,
}


def _coerce(path, value, typ):
    if value is None:
        return None
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, typ):
        raise ConfigError(path, f"expected {typ.__name__}, got {value!r}")
    return value


def _check_range(path, ok, message):
    if not ok:
        raise ConfigError(path, message)


def parse_config(doc):
    """Validate a config mapping and return a :class:`RunConfig` with
    defaults applied. Unknown keys are rejected; ``family`` is accepted as
    an alias of ``problem``."""
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a key/value mapping")
    doc = dict(doc)
    if "family" in doc:
        if "problem" in doc and doc["problem"] != doc["family"]:
            raise ConfigError("family", "conflicts with 'problem'")
        doc["problem"] = doc.pop("family")
    values = {}
    for key, raw in doc.items():
        if key not in _TYPES:
            raise ConfigError(key, "unknown key")
        values[key] = _coerce(key, raw, _TYPES[key])
    if isinstance(values.get("instance"), dict):
        inst = {}
        for key, raw in values["instance"].items():
            if key not in _INSTANCE_TYPES:
                raise ConfigError(f"instance.{key}", "unknown key")
            inst[key] = _coerce(f"instance.{key}", raw, _INSTANCE_TYPES[key])
        values["instance"] = inst
    cfg = RunConfig(**values)

    _check_range("problem", cfg.problem in FAMILIES, f"must be one of {list(FAMILIES)}")
    _check_range("rule", cfg.rule in RULES, f"must be one of {sorted(RULES)}")
    _check_range("pi", 1.0 <= cfg.pi <= 2.0, f"must lie in [1, 2], got {cfg.pi}")
    _check_range("nu", cfg.nu is None or 0.0 < cfg.nu <= 1.0, f"must lie in (0, 1], got {cfg.nu}")
    _check_range("gamma0", cfg.gamma0 is None or cfg.gamma0 > 0, "must be positive")
    _check_range("memory", cfg.memory >= 1, "must be >= 1")
    _check_range("tol", cfg.tol >= 0, "must be nonnegative")
    _check_range("max_iters", cfg.max_iters >= 1, "must be >= 1")
    _check_range("aa_nu_mode", cfg.aa_nu_mode in ("aggregate", "per-pair"),
                 "must be 'aggregate' or 'per-pair'")
    _check_range("lam", cfg.lam is None or cfg.lam >= 0, "must be nonnegative")
    _check_range("M", cfg.M > 0, "must be positive")
    _check_range("p", 1.0 < cfg.p <= 2.0, "must lie in (1, 2]")
    _check_range("seed", 0 <= cfg.seed < 2**64, "must be a 64-bit unsigned integer")
    _check_range("jobs", cfg.jobs >= 1, "must be >= 1")
    _check_range("n_features", cfg.n_features is None or cfg.n_features >= 1, "must be >= 1")
    if cfg.instance is not None:
        try:
            cfg.instance_spec()
        except ValueError as exc:
            raise ConfigError("instance", str(exc)) from None
    return cfg


def read_config(path):
    """Read a JSON config document; see :func:`parse_config`."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from None
    return parse_config(doc)
