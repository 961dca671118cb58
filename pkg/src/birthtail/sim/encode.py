"""Flat encodings of rate functions and explosion guards for the compiled kernels."""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from ..rates import (Constant, Exponential, Polynomial, PolyLog, RateFunction, Tabulated,
                     E_MINUS_1, is_explosive, tail_min, tail_sum)

# family codes shared with the kernels
POLY, EXP, POLYLOG, CONST = 0, 1, 2, 3
_CODES = {Polynomial: POLY, Exponential: EXP, PolyLog: POLYLOG, Constant: CONST}

DEFAULT_DELTA = 1e-12


def _params(F: RateFunction) -> tuple[float, float, float]:
    code = _CODES[type(F)]
    if isinstance(F, Polynomial):
        return code, F.alpha, F.beta
    if isinstance(F, Constant):
        return code, F.lam, 0.0
    return code, F.beta, 0.0


def encode_rates(Fs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(params[A, 3], tables[A, L], table_len[A]) for a list of rate functions.

    Tabulated rates store their values in ``tables`` and their tail family
    in ``params``; other families have table_len 0.
    """
    Fs = list(Fs)
    L = max([len(F.values) for F in Fs if isinstance(F, Tabulated)] + [1])
    params = np.zeros((len(Fs), 3))
    tables = np.zeros((len(Fs), L))
    tlen = np.zeros(len(Fs), dtype=np.int64)
    for i, F in enumerate(Fs):
        if isinstance(F, Tabulated):
            tables[i, :len(F.values)] = F.values
            tlen[i] = len(F.values)
            F = F.tail
            if F is None:
                # values past the table are never requested for finite runs
                params[i] = (CONST, 1.0, 0.0)
                continue
        params[i] = _params(F)
    return params, tables, tlen


@nb.njit(inline="always", cache=True)
def rate_at(params, tables, tlen, a, k):
    """F_a(k) for k >= 1."""
    if k <= tlen[a]:
        return tables[a, k - 1]
    code = int(params[a, 0])
    kf = float(k)
    if code == 0:
        return params[a, 1] * kf ** params[a, 2]
    if code == 1:
        return math.exp(params[a, 1] * (kf - 1.0))
    if code == 2:
        return kf * math.log(E_MINUS_1 + kf) ** params[a, 1]
    return params[a, 1]


def checkpoints(max_jumps: int, dense: int = 64, ratio: float = 1.0625) -> np.ndarray:
    """Jump counts at which the guard is tabulated: every j below ``dense``, then geometric.

    The last point is >= max_jumps.  Between checkpoints the guard of the
    latest checkpoint is used, which is conservative since it only shrinks.
    """
    pts = list(range(min(dense, max_jumps) + 1))
    while pts[-1] < max_jumps:
        pts.append(max(pts[-1] + 1, int(pts[-1] * ratio)))
    return np.asarray(pts, dtype=np.int64)


def chernoff_quantile(t1: float, t2: float, theta_max: float, delta: float) -> float:
    """q with P(R > q) <= delta for R a sum of independent Exp(F_k).

    Uses E exp(th R) <= exp(th t1 + th^2 t2) for th <= min F_k / 2, where
    t1 = sum 1/F_k and t2 = sum 1/F_k^2.
    """
    L = -math.log(delta)
    if t2 <= 0 or theta_max <= 0:
        return t1 / delta
    if math.sqrt(L / t2) <= theta_max:
        q = t1 + 2.0 * math.sqrt(L * t2)
    else:
        q = t1 + theta_max * t2 + L / theta_max
    return min(q, t1 / delta)  # Markov bound is also valid


def guard_table(F: RateFunction, x0: int, pts: np.ndarray, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Upper delta-quantile of the time still needed to explode after j jumps, per checkpoint j."""
    if not is_explosive(F):
        return np.full(len(pts), np.inf)
    out = np.empty(len(pts))
    for c, j in enumerate(pts):
        last = x0 + int(j) - 1  # sojourns x0..last already drawn
        t1 = tail_sum(F, last, 1).value
        t2 = tail_sum(F, last, 2).value
        out[c] = chernoff_quantile(t1, t2, 0.5 * tail_min(F, last), delta)
    return out


def lower_quantile(t1: float, t2: float, delta: float) -> float:
    """q with P(R < q) <= delta, from E exp(-th R) <= exp(-th t1 + th^2 t2 / 2) for all th >= 0."""
    return max(0.0, t1 - math.sqrt(-2.0 * math.log(delta) * t2))


def lower_guard_table(F: RateFunction, x0: int, pts: np.ndarray,
                      delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Lower delta-quantile of the remaining explosion time after j jumps, per checkpoint j.

    Valid for any j at or below the checkpoint, since the remainder shrinks with j.
    """
    if not is_explosive(F):
        return np.full(len(pts), np.inf)
    out = np.empty(len(pts))
    for c, j in enumerate(pts):
        last = x0 + int(j) - 1
        out[c] = lower_quantile(tail_sum(F, last, 1).value, tail_sum(F, last, 2).value, delta)
    return out


def mean_table(F: RateFunction, x0: int, pts: np.ndarray) -> np.ndarray:
    if not is_explosive(F):
        return np.full(len(pts), np.inf)
    return np.array([tail_sum(F, x0 + int(j) - 1, 1).value for j in pts])


def default_max_jumps(F: RateFunction) -> int:
    """Sojourn cap per process: 10^6, or 100 for exponential feedback."""
    G = F.tail if isinstance(F, Tabulated) else F
    return 100 if isinstance(G, Exponential) else 10 ** 6
