"""Rate (feedback) functions F: {1, 2, ...} -> (0, inf) and their reciprocal series.

Every quantity in the package is built from F and the sums of 1/F(k)^p over
a head or a tail of the integers, so this module keeps the analytic facts
about each family in one place: explosiveness, closed-form tail sums where a
family admits one, and monotonicity.

Families and their text form (keys are order-insensitive)::

    poly:alpha=1,beta=2          F(k) = alpha * k**beta
    exp:beta=1                   F(k) = exp(beta * (k - 1))
    polylog:beta=2               F(k) = k * log(e - 1 + k)**beta
    const:lambda=1.5             F(k) = lambda
    table:values=1;3;7,tail=poly|alpha=1,beta=2
                                 listed values for k <= 3, tail family after
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import DivergenceError, DomainError, ParseError, UndecidableError

E_MINUS_1 = math.e - 1.0
DEFAULT_TOL = 1e-10
# direct summation length before switching to integral comparison
_DIRECT_TERMS = 1 << 17


@dataclass(frozen=True)
class SeriesSum:
    """A partial or closed-form series value with an absolute error bound."""

    value: float
    remainder_bound: float = 0.0
    terms_used: int = 0

    def __post_init__(self):
        if self.value < 0 or self.remainder_bound < 0:
            raise ValueError("series sums and bounds are non-negative")

    def __float__(self) -> float:
        return self.value


class RateFunction:
    """Base class; concrete families are frozen dataclasses below."""

    family: str = ""

    def __call__(self, k):
        return evaluate(self, k)

    @property
    def spec(self) -> str:
        return format_rate(self)


@dataclass(frozen=True)
class Polynomial(RateFunction):
    alpha: float
    beta: float
    family = "poly"

    def __post_init__(self):
        _check_finite(self.beta, "beta")
        _check_positive(self.alpha, "alpha")


@dataclass(frozen=True)
class Exponential(RateFunction):
    beta: float
    family = "exp"

    def __post_init__(self):
        _check_positive(self.beta, "beta")


@dataclass(frozen=True)
class PolyLog(RateFunction):
    beta: float
    family = "polylog"

    def __post_init__(self):
        _check_finite(self.beta, "beta")


@dataclass(frozen=True)
class Constant(RateFunction):
    lam: float
    family = "const"

    def __post_init__(self):
        _check_positive(self.lam, "lambda")


@dataclass(frozen=True)
class Tabulated(RateFunction):
    """Explicit values for k = 1..len(values); ``tail`` governs k > len(values)."""

    values: tuple[float, ...]
    tail: RateFunction | None = None
    family = "table"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise DomainError("table needs at least one value")
        for v in self.values:
            _check_positive(v, "table value")
        if isinstance(self.tail, Tabulated):
            raise DomainError("a table tail must be an analytic family")


def _check_finite(v: float, name: str) -> None:
    if not math.isfinite(v):
        raise DomainError(f"{name} must be finite, got {v}")


def _check_positive(v: float, name: str) -> None:
    _check_finite(v, name)
    if v <= 0:
        raise DomainError(f"{name} must be positive, got {v}")


# ---------------------------------------------------------------- parsing

_FLOAT_RE = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?\Z")
_KEYS = {
    "poly": ("alpha", "beta"),
    "exp": ("beta",),
    "polylog": ("beta",),
    "const": ("lambda",),
    "table": ("values", "tail"),
}


def _parse_float(token: str) -> float:
    if not _FLOAT_RE.match(token):
        raise ParseError("malformed number", token)
    return float(token)


def _split_pairs(body: str, family: str) -> dict[str, str]:
    if not body:
        raise ParseError("missing parameters for family", family)
    tokens = body.split(",")
    pairs: dict[str, str] = {}
    last = None
    for tok in tokens:
        key, eq, val = tok.partition("=")
        if family == "table" and last == "tail" and key not in _KEYS["table"]:
            # commas inside the nested tail spec belong to it
            pairs["tail"] += "," + tok
            continue
        if not eq or not key:
            raise ParseError("expected key=value", tok)
        if key not in _KEYS[family]:
            raise ParseError(f"unknown key for {family}", key)
        if key in pairs:
            raise ParseError("duplicate key", key)
        pairs[key] = val
        last = key
    missing = [k for k in _KEYS[family] if k not in pairs]
    if missing:
        raise ParseError(f"missing key for {family}", missing[0])
    return pairs


def parse_rate(spec: str) -> RateFunction:
    """Parse a rate spec such as ``"poly:alpha=1,beta=2"``."""
    spec = spec.strip()
    family, colon, body = spec.partition(":")
    if not colon:
        raise ParseError("expected family:key=value", spec)
    if family not in _KEYS:
        raise ParseError("unknown family", family)
    pairs = _split_pairs(body, family)
    if family == "poly":
        return Polynomial(_parse_float(pairs["alpha"]), _parse_float(pairs["beta"]))
    if family == "exp":
        return Exponential(_parse_float(pairs["beta"]))
    if family == "polylog":
        return PolyLog(_parse_float(pairs["beta"]))
    if family == "const":
        return Constant(_parse_float(pairs["lambda"]))
    values = tuple(_parse_float(v) for v in pairs["values"].split(";"))
    tail_spec = pairs["tail"]
    if "|" not in tail_spec:
        raise ParseError("nested tail spec must use '|'", tail_spec)
    nested = tail_spec.replace("|", ":", 1)
    if nested.startswith("table:"):
        raise ParseError("nested table tails are not allowed", tail_spec)
    return Tabulated(values, parse_rate(nested))


def _num(v: float) -> str:
    # integral values print without a decimal point; repr round-trips the rest
    return str(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(float(v))


def format_rate(F: RateFunction, nested: bool = False) -> str:
    """Inverse of :func:`parse_rate`."""
    sep = "|" if nested else ":"
    if isinstance(F, Polynomial):
        return f"poly{sep}alpha={_num(F.alpha)},beta={_num(F.beta)}"
    if isinstance(F, Exponential):
        return f"exp{sep}beta={_num(F.beta)}"
    if isinstance(F, PolyLog):
        return f"polylog{sep}beta={_num(F.beta)}"
    if isinstance(F, Constant):
        return f"const{sep}lambda={_num(F.lam)}"
    if isinstance(F, Tabulated):
        if F.tail is None:
            raise UndecidableError("table without tail descriptor cannot be serialized")
        vals = ";".join(_num(v) for v in F.values)
        return f"table{sep}values={vals},tail={format_rate(F.tail, nested=True)}"
    raise TypeError(f"not a rate function: {F!r}")


# ------------------------------------------------------------- evaluation

def _eval_analytic(F: RateFunction, k: np.ndarray) -> np.ndarray:
    if isinstance(F, Polynomial):
        return F.alpha * k ** F.beta
    if isinstance(F, Exponential):
        with np.errstate(over="ignore"):  # rates beyond 1e308 are infinite
            return np.exp(F.beta * (k - 1.0))
    if isinstance(F, PolyLog):
        return k * np.log(E_MINUS_1 + k) ** F.beta
    if isinstance(F, Constant):
        return np.full_like(k, F.lam)
    raise TypeError(f"not a rate function: {F!r}")


def evaluate(F: RateFunction, k):
    """F(k) for an integer or integer array k >= 1."""
    arr = np.asarray(k)
    if arr.size and (arr < 1).any():
        raise DomainError(f"rate functions are defined for k >= 1, got {k}")
    kf = arr.astype(float)
    if isinstance(F, Tabulated):
        n = len(F.values)
        out = np.empty_like(kf)
        inside = arr <= n
        out[inside] = np.asarray(F.values)[arr[inside].astype(np.int64) - 1]
        if (~inside).any():
            if F.tail is None:
                raise UndecidableError("table has no tail descriptor beyond its last value")
            out[~inside] = _eval_analytic(F.tail, kf[~inside])
    else:
        out = _eval_analytic(F, kf)
    return float(out) if np.ndim(k) == 0 else out


def rates_window(F: RateFunction, start: int, count: int) -> np.ndarray:
    """F(start), ..., F(start + count - 1) as a float array."""
    return np.asarray(evaluate(F, np.arange(start, start + count)), dtype=float)


# ------------------------------------------------------- analytic metadata

def _analytic_tail(F: RateFunction) -> RateFunction:
    if isinstance(F, Tabulated):
        if F.tail is None:
            raise UndecidableError("table has no tail descriptor; explosiveness is undecidable")
        return F.tail
    return F


def is_explosive(F: RateFunction) -> bool:
    """Whether the sum of 1/F(k) converges (Feller-Lundberg criterion)."""
    G = _analytic_tail(F)
    if isinstance(G, Polynomial):
        return G.beta > 1
    if isinstance(G, Exponential):
        return True
    if isinstance(G, PolyLog):
        return G.beta > 1
    return False


def series_converges(F: RateFunction, power: float) -> bool:
    """Whether the sum of F(k)**(-power) converges."""
    G = _analytic_tail(F)
    if isinstance(G, Polynomial):
        return G.beta * power > 1
    if isinstance(G, Exponential):
        return True
    if isinstance(G, PolyLog):
        return power > 1 or (power == 1 and G.beta > 1)
    return False


def diverges(F: RateFunction) -> bool:
    """Whether F(k) tends to infinity."""
    G = _analytic_tail(F)
    if isinstance(G, (Polynomial, PolyLog)):
        return G.beta > 0
    return isinstance(G, Exponential)


def _increasing_family(G: RateFunction) -> bool:
    if isinstance(G, Polynomial):
        return G.beta > 0
    if isinstance(G, Exponential):
        return True
    if isinstance(G, PolyLog):
        # d/dk [k L^b] > 0  iff  L + b k/(e-1+k) > 0, and L >= 1 for k >= 1
        return G.beta > -1
    return False


def is_strictly_increasing(F: RateFunction) -> bool:
    if isinstance(F, Tabulated):
        if F.tail is None:
            raise UndecidableError("table has no tail descriptor")
        v = np.asarray(F.values)
        n = len(v)
        return bool(np.all(np.diff(v) > 0) and v[-1] < evaluate(F.tail, n + 1)
                    and _increasing_family(F.tail))
    return _increasing_family(F)


def tail_min(F: RateFunction, x: int) -> float:
    """inf over k > x of F(k)."""
    if isinstance(F, Tabulated):
        n = len(F.values)
        rest = min(F.values[x:]) if x < n else math.inf
        return min(rest, tail_min(_analytic_tail(F), max(x, n)))
    if isinstance(F, Constant):
        return F.lam
    if _increasing_family(F):
        return evaluate(F, x + 1)
    return 0.0


# ----------------------------------------------------------- series sums

def head_sum(F: RateFunction, x0: int, x: int, power: float = 1) -> SeriesSum:
    """Exact finite sum of F(k)**(-power) for k = x0..x."""
    if x0 < 1 or x < x0:
        raise DomainError(f"need 1 <= x0 <= x, got x0={x0}, x={x}")
    terms = rates_window(F, x0, x - x0 + 1) ** (-float(power))
    return SeriesSum(math.fsum(terms), 0.0, x - x0 + 1)


def tail_sum(F: RateFunction, x: int, power: float = 1, tol: float = DEFAULT_TOL) -> SeriesSum:
    """Sum of F(k)**(-power) over k > x."""
    if x < 0:
        raise DomainError(f"x must be >= 0, got {x}")
    if not series_converges(F, power):
        raise DivergenceError(f"sum of F(k)^-{power} diverges for {format_rate(F)}")
    return _tail_sum_cached(F, int(x), float(power), float(tol))


@lru_cache(maxsize=4096)
def _tail_sum_cached(F: RateFunction, x: int, power: float, tol: float) -> SeriesSum:
    if isinstance(F, Tabulated):
        n = len(F.values)
        head = 0.0
        used = 0
        if x < n:
            vals = np.asarray(F.values[x:]) ** (-power)
            head = math.fsum(vals)
            used = len(vals)
        rest = _tail_sum_cached(F.tail, max(x, n), power, tol)
        return SeriesSum(head + rest.value, rest.remainder_bound, used + rest.terms_used)
    if isinstance(F, Polynomial):
        s = F.beta * power
        val = float(special.zeta(s, x + 1.0)) * F.alpha ** (-power)
        return SeriesSum(val, 0.0, 0)
    if isinstance(F, Exponential):
        q = F.beta * power
        val = math.exp(-q * x) / -math.expm1(-q)
        return SeriesSum(val, 0.0, 0)
    if isinstance(F, PolyLog):
        return _polylog_tail(F.beta, x, power, tol)
    raise DivergenceError(f"no convergent tail for {F!r}")


def _polylog_term(k, beta: float, power: float):
    k = np.asarray(k, dtype=float)
    return (k * np.log(E_MINUS_1 + k) ** beta) ** (-power)


def _polylog_integral(a: float, beta: float, power: float) -> float:
    """Integral of (k L(k)^beta)^-power over [a, inf), L(k) = log(e-1+k)."""
    ua = math.log(E_MINUS_1 + a)
    if power == 1:
        # k = e^u - (e-1): integrand u^-beta / (1 - (e-1) e^-u)
        main = ua ** (1.0 - beta) / (beta - 1.0)

        def rest(u):
            w = E_MINUS_1 * math.exp(-u)
            return u ** (-beta) * w / (1.0 - w)

        extra, _ = integrate.quad(rest, ua, math.inf, epsabs=1e-15, epsrel=1e-12, limit=200)
        return main + extra

    # k = a / v maps [a, inf) onto (0, 1] with a bounded integrand
    def f(v):
        k = a / v
        return (k * math.log(E_MINUS_1 + k) ** beta) ** (-power) * a / (v * v)

    val, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def _polylog_tail(beta: float, x: int, power: float, tol: float) -> SeriesSum:
    # f is decreasing and convex far out; bracket the remainder between the
    # trapezoid (lower) and midpoint (upper) integral comparisons
    m = max(x, _DIRECT_TERMS)
    while True:
        direct = 0.0
        if m > x:
            direct = math.fsum(_polylog_term(np.arange(x + 1, m + 1), beta, power))
        lower = _polylog_integral(m + 1.0, beta, power) + 0.5 * float(_polylog_term(m + 1, beta, power))
        upper = _polylog_integral(m + 0.5, beta, power)
        half = 0.5 * abs(upper - lower)
        if half <= tol or m >= 1 << 24:
            return SeriesSum(direct + 0.5 * (lower + upper), half, m - x)
        m *= 4
