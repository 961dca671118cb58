"""Hypoexponential densities and the explosion-time law of a pure birth process.

For pairwise distinct rates l_1..l_n the sum of independent Exp(l_k) draws
has density and survival

    g(t) = sum_k c_k l_k exp(-l_k t),    P(T > t) = sum_k c_k exp(-l_k t),
    c_k  = prod_{l != k} l_l / (l_l - l_k).

The coefficients alternate in sign, so the sums cancel badly for small t.
Each sum is evaluated as signed log-magnitude terms, split into a positive
and a negative part, and the ratio (|pos| + |neg|) / |pos - neg| is used as a
condition number.  In strict mode a condition above ``MAX_CONDITION`` raises
:class:`PrecisionLossError`.  In extended mode any point above
``EXTENDED_CONDITION`` is re-evaluated by uniformization or mpmath, which
keeps the relative error near 1e-10.  Points whose Chernoff upper bound underflows are
returned as exact zeros without any of that work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy import optimize

from .errors import DistinctnessError, DomainError, PrecisionLossError
from .rates import RateFunction, is_explosive, rates_window, tail_sum

MAX_CONDITION = 1e12
EXTENDED_CONDITION = 1e6  # float error is about condition * 1e-16
MIN_REL_GAP = 1e-9
_LOG_TINY = -745.0  # below this exp() underflows to zero
_CHUNK = 8192


@dataclass(frozen=True)
class HypoExpSpec:
    """Distinct positive rates of a sum of independent exponentials."""

    rates: tuple[float, ...]

    def __post_init__(self):
        r = tuple(float(x) for x in self.rates)
        object.__setattr__(self, "rates", r)
        if not r:
            raise DomainError("need at least one rate")
        if any(not (x > 0 and math.isfinite(x)) for x in r):
            raise DomainError("rates must be positive and finite")
        s = np.sort(np.asarray(r))
        if len(s) > 1:
            gap = np.diff(s) / s[1:]
            i = int(np.argmin(gap))
            if gap[i] < MIN_REL_GAP:
                raise DistinctnessError(
                    f"rates {s[i]!r} and {s[i + 1]!r} are not distinct (relative gap "
                    f"{gap[i]:.3g} < {MIN_REL_GAP}); perturb them with perturb_rates()")

    @property
    def n(self) -> int:
        return len(self.rates)


def perturb_rates(rates, eps: float) -> HypoExpSpec:
    """Spread rates multiplicatively, rate_i * (1 + i*eps), to force distinctness."""
    r = np.asarray(rates, dtype=float)
    return HypoExpSpec(tuple(r * (1.0 + eps * np.arange(len(r)))))


@dataclass(frozen=True)
class ExplosionModel:
    """Explosion time T of the birth process started at x0, truncated to N sojourns."""

    F: RateFunction
    x0: int = 1
    truncation_N: int = 100

    def __post_init__(self):
        if self.x0 < 1 or self.truncation_N < 1:
            raise DomainError("x0 and truncation_N must be >= 1")
        if not is_explosive(self.F):
            raise DomainError(f"{self.F.spec} is not explosive")

    @property
    def rates(self) -> np.ndarray:
        return rates_window(self.F, self.x0, self.truncation_N)

    @property
    def spec(self) -> HypoExpSpec:
        return _hypo_spec(self.F, self.x0, self.truncation_N)

    @property
    def bias_bound(self) -> float:
        """E[T - T_N], the mean of the dropped sojourns."""
        return tail_sum(self.F, self.x0 + self.truncation_N - 1, 1).value


@lru_cache(maxsize=256)
def _hypo_spec(F, x0, n) -> HypoExpSpec:
    return HypoExpSpec(tuple(rates_window(F, x0, n)))


@dataclass(frozen=True)
class DensityGrid:
    t_values: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ("density", "survival", "hazard"):
            raise DomainError(f"unknown grid kind {self.kind!r}")
        t = np.asarray(self.t_values, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise DomainError("t_values and values must be equal-length vectors")
        if (np.diff(t) <= 0).any() or (t < 0).any():
            raise DomainError("t_values must be increasing and non-negative")
        object.__setattr__(self, "t_values", t)
        object.__setattr__(self, "values", v)

    def to_csv(self) -> str:
        from .io import fmt

        lines = ["t,value,kind"]
        lines += [f"{fmt(t)},{fmt(v)},{self.kind}" for t, v in zip(self.t_values, self.values)]
        return "\n".join(lines) + "\n"


# ------------------------------------------------------------ coefficients

@lru_cache(maxsize=256)
def _log_coefficients(rates: tuple[float, ...]) -> tuple[np.ndarray, np.ndarray]:
    """log|c_k| and sign(c_k) for c_k = prod_{l!=k} r_l / (r_l - r_k)."""
    r = np.asarray(rates)
    n = len(r)
    logc = np.empty(n)
    sign = np.empty(n)
    logr = np.log(r)
    for k in range(n):
        d = np.delete(r, k) - r[k]
        logc[k] = np.sum(np.delete(logr, k)) - np.sum(np.log(np.abs(d)))
        sign[k] = -1.0 if np.count_nonzero(d < 0) % 2 else 1.0
    return logc, sign


@lru_cache(maxsize=64)
def _mp_coefficients(rates: tuple[float, ...], dps: int) -> list:
    with mpmath.workdps(dps):
        r = [mpmath.mpf(x) for x in rates]
        out = []
        for k, rk in enumerate(r):
            p = mpmath.mpf(1)
            for l, rl in enumerate(r):
                if l != k:
                    p *= rl / (rl - rk)
            out.append(p)
        return out


def _log_cdf_bound(rates: np.ndarray, t: float) -> float:
    """Chernoff bound log P(T <= t) <= min_th th*t + sum log(r / (r + th))."""
    if t <= 0:
        return -math.inf

    def h(z):
        th = math.exp(z)
        return th * t - np.sum(np.log1p(th / rates))

    res = optimize.minimize_scalar(h, bounds=(-30.0, 60.0), method="bounded",
                                   options={"xatol": 1e-6})
    return min(float(res.fun), 0.0)


def _log_density_bound(rates: np.ndarray, t: float) -> float:
    """g(t) <= r_j P(T without r_j <= t), taking r_j the largest rate."""
    if len(rates) == 1:
        return math.log(rates[0]) - rates[0] * t
    j = int(np.argmax(rates))
    return math.log(rates[j]) + _log_cdf_bound(np.delete(rates, j), t)


def _mp_eval(rates: tuple[float, ...], t: float, what: str) -> float:
    """Extended precision value of density ('g'), survival ('sf') or cdf ('cdf')."""
    dps = 40
    while True:
        with mpmath.workdps(dps):
            c = _mp_coefficients(rates, dps)
            tt = mpmath.mpf(t)
            acc = mpmath.mpf(0)
            mag = mpmath.mpf(0)
            for ck, rk in zip(c, rates):
                rk = mpmath.mpf(rk)
                if what == "g":
                    term = ck * rk * mpmath.exp(-rk * tt)
                elif what == "sf":
                    term = ck * mpmath.exp(-rk * tt)
                else:
                    term = -ck * mpmath.expm1(-rk * tt)
                acc += term
                mag += abs(term)
            if acc != 0 and mag / abs(acc) < mpmath.mpf(10) ** (dps - 20):
                return float(acc)
            if acc == 0 and mag == 0:
                return 0.0
        if dps >= 2400:
            raise PrecisionLossError(f"extended precision exhausted at t={t}", math.inf)
        dps *= 2


_UNIFORM_MAX_LT = 2e4


def _uniformized(rates: np.ndarray, t: np.ndarray, what: str) -> np.ndarray:
    """All-positive evaluation through a Poisson clock of rate max(rates).

    The chain in state j moves on with probability r_j / R at each tick of
    the clock, so P(state j at t) = sum_m Pois(m; R t) v_m[j].  Every term is
    non-negative, which makes the result accurate in the relative sense
    exactly where the alternating sum is not.  Vectors are kept in log scale
    to survive the tiny values met for small t.
    """
    R = float(np.max(rates))
    q = rates / R
    n = len(rates)
    lt = R * t
    m_max = int(np.max(lt) + 40.0 * math.sqrt(np.max(lt) + n) + 2 * n + 100)
    v = np.zeros(n)
    v[0] = 1.0
    logscale = 0.0
    log_last = np.full(m_max + 1, -np.inf)
    log_absorbed = np.full(m_max + 1, -np.inf)
    absorbed = -np.inf
    for m in range(m_max + 1):
        log_last[m] = math.log(v[-1]) + logscale if v[-1] > 0 else -np.inf
        log_absorbed[m] = absorbed
        flow = v[-1] * q[-1]
        if flow > 0:
            absorbed = np.logaddexp(absorbed, math.log(flow) + logscale)
        nv = v * (1.0 - q)
        nv[1:] += v[:-1] * q[:-1]
        top = nv.max()
        if top <= 0:
            break
        v = nv / top
        logscale += math.log(top)
    ms = np.arange(m_max + 1)
    logfact = np.cumsum(np.log(np.maximum(ms, 1)))
    target = log_last + math.log(rates[-1]) if what == "g" else log_absorbed
    out = np.empty(len(t))
    for i, x in enumerate(lt):
        logw = ms * math.log(x) - x - logfact + target
        top = np.max(logw)
        out[i] = 0.0 if top == -np.inf else math.exp(top) * np.sum(np.exp(logw - top))
    return out


def _float_sums(rates: np.ndarray, logc: np.ndarray, sign: np.ndarray, t: np.ndarray, what: str):
    """Vectorized signed sums; returns (value, condition)."""
    logw = logc + np.log(rates)
    out = np.empty(len(t))
    cond = np.empty(len(t))
    pos = sign > 0
    with np.errstate(over="ignore", invalid="ignore"):
        return _chunked_sums(rates, logc, logw, pos, t, what, out, cond)


def _chunked_sums(rates, logc, logw, pos, t, what, out, cond):
    for i in range(0, len(t), _CHUNK):
        tt = t[i:i + _CHUNK, None]
        if what == "g":
            mag = np.exp(logw[None, :] - rates[None, :] * tt)
        elif what == "sf":
            mag = np.exp(logc[None, :] - rates[None, :] * tt)
        else:
            mag = np.exp(logc)[None, :] * -np.expm1(-rates[None, :] * tt)
        p = mag[:, pos].sum(axis=1)
        m = mag[:, ~pos].sum(axis=1)
        val = p - m
        out[i:i + _CHUNK] = val
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(val != 0, (p + m) / np.abs(val), np.inf)
        # overflowing coefficients give inf or nan; both count as ill-conditioned
        cond[i:i + _CHUNK] = np.where(np.isfinite(c), c, np.inf)
    return out, cond


def zhu_values(spec: HypoExpSpec, t, what: str = "g", precision: str = "extended"):
    """Density ('g'), survival ('sf') or cdf ('cdf') of the hypoexponential sum.

    Accepts a scalar or an array of t >= 0.  Ill-conditioned points are
    either escalated to mpmath or reported with :class:`PrecisionLossError`.
    """
    if precision not in ("extended", "strict"):
        raise DomainError(f"precision must be 'extended' or 'strict', got {precision!r}")
    scalar = np.ndim(t) == 0
    tv = np.atleast_1d(np.asarray(t, dtype=float))
    if (tv < 0).any() or not np.isfinite(tv).all():
        raise DomainError("t must be finite and >= 0")
    rates = np.asarray(spec.rates)
    n = len(rates)
    out = np.empty(len(tv))
    zero = tv == 0
    if n == 1:
        r = rates[0]
        vals = {"g": r * np.exp(-r * tv), "sf": np.exp(-r * tv), "cdf": -np.expm1(-r * tv)}[what]
        return float(vals[0]) if scalar else vals
    logc, sign = _log_coefficients(spec.rates)
    out[zero] = {"g": 0.0, "sf": 1.0, "cdf": 0.0}[what]
    idx = np.flatnonzero(~zero)
    if len(idx):
        val, cond = _float_sums(rates, logc, sign, tv[idx], what)
        if what != "g":
            # the complement sum may be far better conditioned, e.g. cdf near 1
            other = "cdf" if what == "sf" else "sf"
            oval, ocond = _float_sums(rates, logc, sign, tv[idx], other)
            with np.errstate(divide="ignore", invalid="ignore"):
                via = np.where(1.0 - oval != 0, ocond * np.abs(oval) / np.abs(1.0 - oval), np.inf)
            use = via < cond
            val = np.where(use, 1.0 - oval, val)
            cond = np.where(use, via, cond)
        out[idx] = val
        limit = MAX_CONDITION if precision == "strict" else EXTENDED_CONDITION
        bad = idx[cond > limit]
        if len(bad):
            kind = "cdf" if what == "sf" else what
            out[bad] = _resolve(spec, rates, tv[bad], kind, precision)
            if what == "sf":
                # survival is 1 - cdf; the cdf path decides conditioning
                out[bad] = 1.0 - out[bad]
    if what == "g":
        out = np.maximum(out, 0.0)
    else:
        out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def _resolve(spec, rates, t: np.ndarray, what: str, precision: str) -> np.ndarray:
    """Values at ill-conditioned points: underflow bound, uniformization, mpmath."""
    bound_fn = _log_density_bound if what == "g" else _log_cdf_bound
    out = np.zeros(len(t))
    live = np.array([bound_fn(rates, float(x)) >= _LOG_TINY for x in t], dtype=bool)
    if not live.any():
        return out
    if precision == "strict":
        raise PrecisionLossError(
            f"cancellation at t={float(t[live][0])} exceeds condition budget "
            f"{MAX_CONDITION:g}", MAX_CONDITION)
    lt = t * float(np.max(rates))
    easy = live & (lt <= _UNIFORM_MAX_LT)
    if easy.any():
        out[easy] = _uniformized(rates, t[easy], what)
    for j in np.flatnonzero(live & ~easy):
        out[j] = _mp_eval(spec.rates, float(t[j]), what)
    return out


# ------------------------------------------------------------- public API

def hypoexp_density(spec: HypoExpSpec, t, precision: str = "extended"):
    """Density of the sum of independent exponentials with the given rates."""
    return zhu_values(spec, t, "g", precision)


def hypoexp_survival(spec: HypoExpSpec, t, precision: str = "extended"):
    return zhu_values(spec, t, "sf", precision)


def hypoexp_cdf(spec: HypoExpSpec, t, precision: str = "extended"):
    return zhu_values(spec, t, "cdf", precision)


def explosion_density(model: ExplosionModel, t, precision: str = "extended"):
    """g(t) of the explosion time, via the first ``truncation_N`` sojourns."""
    return zhu_values(model.spec, t, "g", precision)


def explosion_survival(model: ExplosionModel, t, precision: str = "extended"):
    """P(T > t), by term-wise closed-form integration of the truncated density."""
    return zhu_values(model.spec, t, "sf", precision)


def explosion_cdf(model: ExplosionModel, t, precision: str = "extended"):
    return zhu_values(model.spec, t, "cdf", precision)


def hazard_prefactor(model: ExplosionModel, t, precision: str = "extended"):
    """g(t) / P(T > t); tends to F(x0) as t grows."""
    tv = np.asarray(t, dtype=float)
    if (tv <= 0).any():
        raise DomainError("hazard_prefactor needs t > 0")
    g = explosion_density(model, t, precision)
    sf = explosion_survival(model, t, precision)
    return g / sf


def density_grid(model: ExplosionModel, t_values, kind: str = "density",
                 precision: str = "extended") -> DensityGrid:
    t = np.asarray(t_values, dtype=float)
    if kind == "density":
        v = explosion_density(model, t, precision)
    elif kind == "survival":
        v = np.minimum.accumulate(explosion_survival(model, t, precision))
    elif kind == "hazard":
        v = hazard_prefactor(model, t, precision)
    else:
        raise DomainError(f"unknown grid kind {kind!r}")
    return DensityGrid(t, np.atleast_1d(v), kind)


def feller_mass(F: RateFunction, x0: int, x: int, t: float, precision: str = "strict") -> float:
    """P(Xi(t) = x) for the birth process started at x0.

    Equals the density of the first passage time past x, evaluated at t,
    divided by F(x).  Valid whether or not F is explosive.
    """
    if x0 < 1 or x < x0:
        raise DomainError(f"need 1 <= x0 <= x, got x0={x0}, x={x}")
    if t < 0:
        raise DomainError("t must be >= 0")
    rates = rates_window(F, x0, x - x0 + 1)
    if t == 0:
        return 1.0 if x == x0 else 0.0
    spec = HypoExpSpec(tuple(rates))
    return min(1.0, zhu_values(spec, float(t), "g", precision) / rates[-1])


def mgf_bounds(rates, s: float) -> tuple[float, float, float]:
    """(lower, exact, upper) for E exp(-s T) with T a sum of Exp(rates)."""
    if not s > 0:
        raise DomainError("s must be positive")
    r = np.asarray(rates, dtype=float)
    if len(r) == 0 or (r <= 0).any():
        raise DomainError("rates must be positive")
    s1 = math.fsum(1.0 / r)
    s2 = math.fsum(1.0 / r ** 2)
    exact = math.exp(-math.fsum(np.log1p(s / r)))
    upper = -s * s1 + s * s * s2
    return math.exp(-s * s1), exact, math.exp(upper) if upper < 709.0 else math.inf


def min_explosion(models, s):
    """(density, survival) of S = min_j T_j for independent explosion times."""
    models = list(models)
    if not models:
        raise DomainError("need at least one model")
    gs = [np.asarray(explosion_density(m, s)) for m in models]
    sfs = [np.asarray(explosion_survival(m, s)) for m in models]
    surv = np.prod(sfs, axis=0)
    dens = np.zeros_like(surv)
    for j, g in enumerate(gs):
        others = np.prod([sfs[k] for k in range(len(models)) if k != j], axis=0) \
            if len(models) > 1 else 1.0
        dens = dens + g * others
    if np.ndim(s) == 0:
        return float(dens), float(surv)
    return dens, surv
