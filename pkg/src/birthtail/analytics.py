"""Empirical tails, slope fits, correlations and prediction comparisons."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .asymptotics import TailPrediction
from .errors import DegenerateSampleError, DomainError, EmptySampleError, InsufficientDataError, RangeError
from .io import fmt

TRANSFORMS = ("loglog", "loglinear", "logloglog")
DEFAULT_FIT_RANGE = (0.5, 0.99)
MIN_FIT_POINTS = 10


@dataclass(frozen=True)
class EmpiricalSurvival:
    """Fraction of the conditioned sample strictly above each support value."""

    support: np.ndarray
    survival: np.ndarray
    n: int
    conditioning: str = "none"
    exceed: np.ndarray | None = field(default=None, repr=False, compare=False)  # counts > support

    def __post_init__(self):
        s = np.asarray(self.survival, dtype=float)
        if len(s) != len(self.support):
            raise DomainError("support and survival lengths differ")
        if np.any(np.diff(s) > 1e-15) or np.any((s < 0) | (s > 1)):
            raise DomainError("survival must be non-increasing within [0, 1]")

    def at(self, x) -> np.ndarray:
        """Survival evaluated at arbitrary points (right-continuous step function)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.searchsorted(self.support, x, side="right") - 1
        out = np.where(idx >= 0, self.survival[np.maximum(idx, 0)], 1.0)
        return out

    def to_csv(self) -> str:
        lines = ["value,survival,n,conditioning"]
        cond = self.conditioning.replace(",", ";")
        for v, s in zip(self.support, self.survival):
            lines.append(f"{fmt(v)},{fmt(s)},{self.n},{cond}")
        return "\n".join(lines) + "\n"


def empirical_survival(samples, condition=None, description: str | None = None) -> EmpiricalSurvival:
    """Exact counting survival of the samples passing ``condition``.

    ``condition`` is a boolean mask or a predicate applied elementwise to the
    sample array; None keeps every sample.
    """
    x = np.asarray(samples)
    if condition is not None:
        mask = condition(x) if callable(condition) else np.asarray(condition, dtype=bool)
        x = x[mask]
        desc = description or "conditioned"
    else:
        desc = description or "none"
    if x.size == 0:
        raise EmptySampleError(f"no sample passes the condition ({desc})")
    support, counts = np.unique(x, return_counts=True)
    exceed = x.size - np.cumsum(counts)
    return EmpiricalSurvival(support, exceed / x.size, int(x.size), desc, exceed)


def merge_survivals(parts) -> EmpiricalSurvival:
    """Survival of the pooled sample from the parts' exact counts."""
    parts = list(parts)
    support = np.unique(np.concatenate([p.support for p in parts]))
    n = sum(p.n for p in parts)
    exceed = np.zeros(len(support), dtype=np.int64)
    for p in parts:
        counts = p.exceed if p.exceed is not None else np.rint(p.survival * p.n).astype(np.int64)
        idx = np.searchsorted(p.support, support, side="right") - 1
        exceed += np.where(idx >= 0, counts[np.maximum(idx, 0)], p.n)
    return EmpiricalSurvival(support, exceed / n, n, "merged", exceed)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    fit_range: tuple[float, float]
    transform: str
    points: int = 0

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise DomainError(f"unknown transform {self.transform!r}")
        if not (math.isfinite(self.stderr) and self.stderr >= 0):
            raise DomainError("stderr must be finite and non-negative")


def _transform_x(x: np.ndarray, transform: str) -> np.ndarray:
    if transform == "loglog":
        return np.log(x)
    if transform == "loglinear":
        return x
    return np.log(np.log(x))


def _fit_points(ecdf: EmpiricalSurvival, fit_range, transform):
    lo, hi = fit_range
    if not 0 <= lo < hi <= 1:
        raise DomainError("fit_range must be quantiles 0 <= lo < hi <= 1")
    cdf = 1.0 - ecdf.survival
    x = np.asarray(ecdf.support, dtype=float)
    keep = (cdf >= lo) & (cdf <= hi) & (ecdf.survival > 0)
    if transform == "loglog":
        keep &= x > 0
    elif transform == "logloglog":
        keep &= x > 1
    return x[keep], ecdf.survival[keep]


def fit_power_tail(ecdf: EmpiricalSurvival, transform: str = "loglog",
                   fit_range: tuple[float, float] = DEFAULT_FIT_RANGE,
                   rescale=None) -> SlopeFit:
    """OLS of log survival against x, log x or log log x over a quantile window.

    ``rescale(x)`` optionally multiplies the survival before the fit, e.g.
    x / log x to test for a flat residual of a n^-1 log n law.
    """
    if transform not in TRANSFORMS:
        raise DomainError(f"unknown transform {transform!r}")
    x, s = _fit_points(ecdf, fit_range, transform)
    if len(x) < MIN_FIT_POINTS:
        raise InsufficientDataError(f"{len(x)} support points in the fit range; "
                                    f"need {MIN_FIT_POINTS}")
    y = np.log(s) if rescale is None else np.log(s * rescale(x))
    tx = _transform_x(x, transform)
    finite = np.isfinite(y) & np.isfinite(tx)
    if finite.sum() < MIN_FIT_POINTS:
        raise InsufficientDataError(f"{int(finite.sum())} usable points in the fit range; "
                                    f"need {MIN_FIT_POINTS}")
    res = stats.linregress(tx[finite], y[finite])
    stderr = float(res.stderr) if math.isfinite(res.stderr) else 0.0
    return SlopeFit(float(res.slope), float(res.intercept), stderr, tuple(fit_range), transform,
                    int(finite.sum()))


def hill_estimator(samples, k: int) -> float:
    """Hill estimate of the tail index from the k largest positive samples.

    Returns alpha with P(X > x) ~ x^-alpha, so the loglog slope is -alpha.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    x = x[x > 0]
    if not 1 <= k < len(x):
        raise InsufficientDataError(f"need 1 <= k < {len(x)} positive samples")
    top = x[-k:]
    ref = x[-k - 1]
    return float(1.0 / np.mean(np.log(top / ref)))


@dataclass(frozen=True)
class Comparison:
    support: np.ndarray
    ratio: np.ndarray  # empirical / predicted
    sup_deviation: float  # max |ratio - 1| over the fit range
    tolerance: float
    verdict: str  # pass or fail

    def to_json(self) -> str:
        return json.dumps({"sup_deviation": self.sup_deviation, "tolerance": self.tolerance,
                           "verdict": self.verdict, "points": len(self.support)})


def compare_prediction(ecdf: EmpiricalSurvival, pred: TailPrediction,
                       x_range: tuple[float, float] | None = None,
                       tolerance: float = 0.25) -> Comparison:
    """Pointwise empirical / predicted survival over ``x_range`` (default: whole support).

    The verdict is pass when every ratio lies in [1/(1+tolerance), 1+tolerance],
    so tolerance 0.25 accepts [0.8, 1.25].
    """
    x = np.asarray(ecdf.support, dtype=float)
    keep = ecdf.survival > 0
    if x_range is not None:
        keep &= (x >= x_range[0]) & (x <= x_range[1])
    if not keep.any():
        raise RangeError("no empirical support inside the comparison range")
    xs = x[keep]
    predicted = pred.survival(xs)
    ok = predicted > 0
    if not ok.any():
        raise RangeError("the prediction vanishes on the empirical support")
    ratio = ecdf.survival[keep][ok] / predicted[ok]
    dev = float(np.max(np.abs(ratio - 1.0)))
    inside = np.all(np.abs(np.log(ratio)) <= math.log1p(tolerance)) if np.all(ratio > 0) else False
    return Comparison(xs[ok], ratio, dev, tolerance, "pass" if inside else "fail")


def pearson_log_corr(pairs) -> tuple[float, tuple[float, float]]:
    """Pearson correlation of the logarithms with a Fisher-z 95% interval."""
    p = np.asarray(pairs, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2:
        raise DomainError("pairs must have shape (n, 2)")
    if len(p) < 3:
        raise InsufficientDataError("need at least 3 pairs")
    if np.any(p <= 0):
        raise DomainError("pairs must be positive")
    lx, ly = np.log(p[:, 0]), np.log(p[:, 1])
    if np.ptp(lx) == 0 or np.ptp(ly) == 0:
        raise DegenerateSampleError("a component has zero variance")
    r = float(np.clip(np.corrcoef(lx, ly)[0, 1], -1.0, 1.0))
    n = len(p)
    if n <= 3 or abs(r) == 1.0:
        return r, (r, r) if abs(r) == 1.0 else (-1.0, 1.0)
    z = math.atanh(r)
    half = stats.norm.ppf(0.975) / math.sqrt(n - 3)
    return r, (math.tanh(z - half), math.tanh(z + half))


def ks_exponential(samples) -> float:
    """Sup distance between the empirical CDF and 1 - exp(-x)."""
    x = np.sort(np.asarray(samples, dtype=float))
    if len(x) < 2:
        raise InsufficientDataError("need at least 2 samples")
    n = len(x)
    cdf = -np.expm1(-np.maximum(x, 0.0))
    hi = np.arange(1, n + 1) / n - cdf
    lo = cdf - np.arange(n) / n
    return float(max(hi.max(), lo.max()))
