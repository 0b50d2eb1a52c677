"""Fast stepsize oracles to be safeguarded by the adaPG update.

Every rule maps the recent ``(s, y)`` pairs to a proposed next stepsize, or
``math.inf`` when the proposal is undefined. Abstaining is always safe since
the solver takes the minimum with the certified stepsize.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import partial

import numpy as np

from .core import LocalEstimates, local_estimates

__all__ = [
    "PairEntry",
    "PairHistory",
    "bb_long",
    "bb_short",
    "martinez",
    "lnse",
    "anderson",
    "plain_adapg",
    "RULES",
    "resolve_rule",
]

ABSTAIN = math.inf


@dataclass(frozen=True)
class PairEntry:
    s: np.ndarray
    y: np.ndarray
    gamma: float
    dot_sy: float
    norm_y_sq: float
    norm_s_sq: float
    est: LocalEstimates


class PairHistory:
    """Ring buffer of the latest displacement/gradient-difference pairs.

    Holds ``max(memory, 2)`` entries so that rules looking one pair back
    (Martinez, LNSE) also work with ``memory=1``. ``last_bb_long`` and
    ``last_bb_short`` are the BB values of the pair preceding the newest one.
    """

    def __init__(self, memory=4, nu=1.0):
        if memory < 1:
            raise ValueError("memory must be >= 1")
        self.memory = int(memory)
        self.nu = nu
        self._entries = deque(maxlen=max(self.memory, 2))
        self.last_bb_long = None
        self.last_bb_short = None

    def __len__(self):
        return len(self._entries)

    def __getitem__(self, i):
        return self._entries[i]

    @property
    def latest(self):
        return self._entries[-1]

    @property
    def previous(self):
        return self._entries[-2] if len(self._entries) >= 2 else None

    def window(self):
        """The last ``memory`` pairs, oldest first."""
        entries = list(self._entries)
        return entries[-self.memory:]

    def push(self, s, y, gamma, est=None):
        s = np.array(s, dtype=float)
        y = np.array(y, dtype=float)
        if est is None:
            est = local_estimates(s, y, gamma, self.nu)
        if self._entries:
            prev = self._entries[-1].est
            self.last_bb_long = bb_long(prev)
            self.last_bb_short = bb_short(prev, self.nu)
        self._entries.append(PairEntry(
            s=s, y=y, gamma=float(gamma),
            dot_sy=float(s @ y), norm_y_sq=float(y @ y), norm_s_sq=float(s @ s),
            est=est,
        ))


def bb_long(est):
    """Long BB stepsize ``1/ell``."""
    if not est.ell > 0:
        return ABSTAIN
    return 1.0 / est.ell


def bb_short(est, nu=1.0):
    """Short BB stepsize ``1/(c^nu L^(1-nu))``, i.e. ``1/c`` when ``nu=1``.

    For ``nu < 1`` the geometric average with ``1/L`` keeps the proposal
    proportional to ``||s||^(1-nu)``.
    """
    if not (math.isfinite(est.c) and est.c > 0 and est.big_l > 0):
        return ABSTAIN
    if nu == 1.0:
        return 1.0 / est.c
    return 1.0 / (est.c ** nu * est.big_l ** (1.0 - nu))


def martinez(hist, est, gamma_k, nu=1.0):
    """Pick long BB if ``gamma_k > <s_k, s_{k-1}> / <y_k, y_{k-1}>``, short
    BB otherwise."""
    prev = hist.previous
    if prev is None:
        return ABSTAIN
    cur = hist.latest
    dot_yy = float(cur.y @ prev.y)
    if dot_yy == 0.0:
        return ABSTAIN
    ratio = float(cur.s @ prev.s) / dot_yy
    if gamma_k > ratio:
        return bb_long(est)
    return bb_short(est, nu)


def lnse(hist, est, nu=1.0):
    """Least normalized secant error choice between long and short BB."""
    if not math.isfinite(est.c):
        return ABSTAIN
    prev_long, prev_short = hist.last_bb_long, hist.last_bb_short
    if prev_long is None or prev_short is None:
        return ABSTAIN
    long_, short = bb_long(est), bb_short(est, nu)
    if not (math.isfinite(long_) and math.isfinite(short)):
        return ABSTAIN
    if long_ + short <= 2.0 * prev_short:
        return long_
    if 1.0 / long_ + 1.0 / short >= 2.0 / prev_long:
        return short
    cur = hist.latest
    err_long = np.linalg.norm(cur.s - long_ * cur.y) / math.sqrt(cur.norm_s_sq)
    err_short = np.linalg.norm(cur.y - cur.s / short) / math.sqrt(cur.norm_y_sq)
    if err_long <= err_short:
        return long_
    return short


def anderson(hist, nu=1.0, est=None, mode="aggregate"):
    """One-dimensional Anderson stepsize over the last ``memory`` pairs.

    With ``nu = 1`` this is ``sum <s_i, y_i> / sum ||y_i||^2``, a weighted
    average of short BB stepsizes. For ``nu < 1``, ``mode="aggregate"``
    returns ``1/(cbar^nu Lbar^(1-nu))`` with ``cbar = sum ||y||^2 / sum <s,y>``
    and ``Lbar = sqrt(sum ||y||^2 / sum ||s||^2)``; ``mode="per-pair"``
    averages the nu-averaged short BB values with weights ``||y_i||^2``.
    """
    window = [e for e in hist.window() if e.norm_s_sq > 0]
    if not window:
        return ABSTAIN
    sum_yy = math.fsum(e.norm_y_sq for e in window)
    sum_sy = math.fsum(e.dot_sy for e in window)
    if sum_yy == 0.0 or sum_sy <= 0.0:
        return ABSTAIN
    if nu == 1.0:
        return sum_sy / sum_yy
    if mode == "aggregate":
        sum_ss = math.fsum(e.norm_s_sq for e in window)
        c_bar = sum_yy / sum_sy
        l_bar = math.sqrt(sum_yy / sum_ss)
        return 1.0 / (c_bar ** nu * l_bar ** (1.0 - nu))
    if mode == "per-pair":
        num = 0.0
        for e in window:
            if e.norm_y_sq == 0.0 or e.dot_sy <= 0.0:
                continue
            num += e.norm_y_sq * bb_short(e.est, nu)
        return num / sum_yy if num > 0 else ABSTAIN
    raise ValueError(f"unknown Anderson mode {mode!r}")


def plain_adapg(*args, **kwargs):
    """Identity rule: always abstain, leaving plain adaPG."""
    return ABSTAIN


def _bb_long_rule(hist, est, gamma_k, nu):
    return bb_long(est)


def _bb_short_rule(hist, est, gamma_k, nu):
    return bb_short(est, nu)


def _lnse_rule(hist, est, gamma_k, nu):
    return lnse(hist, est, nu)


def _anderson_rule(hist, est, gamma_k, nu, mode="aggregate"):
    return anderson(hist, nu, est, mode=mode)


RULES = {
    "adapg": plain_adapg,
    "bb-long": _bb_long_rule,
    "bb-short": _bb_short_rule,
    "martinez": martinez,
    "lnse": _lnse_rule,
    "aa": _anderson_rule,
}


def resolve_rule(rule, config=None):
    """Turn a rule name (or callable) into ``f(hist, est, gamma_k, nu)``."""
    if callable(rule):
        return rule
    try:
        fn = RULES[rule]
    except KeyError:
        raise ValueError(f"unknown stepsize rule {rule!r}; choose from {sorted(RULES)}") from None
    if rule == "aa" and config is not None:
        return partial(fn, mode=config.aa_nu_mode)
    return fn
