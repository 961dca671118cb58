"""Closed-form tail predictions for birth processes and the urns built from them.

Everything here is a deterministic function of the rate functions.  The urn
constants are expectations over S, the smallest explosion time among a set
of agents, and are computed by the trapezoid rule on a uniform grid of the
truncated densities (defaults: step 1e-4 on [0, 50], 100 sojourns).

Agents are indexed from 0 in code.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import density as dn
from .errors import AssumptionError, DomainError, ParseError, UnsupportedError
from .rates import (Constant, Exponential, Polynomial, PolyLog, RateFunction, Tabulated,
                    diverges, evaluate, format_rate, head_sum, is_explosive,
                    is_strictly_increasing, parse_rate, series_converges, tail_sum)

COND_MONTIME = "assumes-condMonTime"


# ------------------------------------------------------------------ types

@dataclass(frozen=True)
class QuadratureParams:
    step: float = 1e-4
    s_max: float = 50.0
    truncation_N: int = 100
    mass_tol: float = 1e-8  # grid is extended until P(S > s_max) < mass_tol

    def __post_init__(self):
        if not (self.step > 0 and self.s_max > self.step and self.truncation_N >= 1):
            raise DomainError("invalid quadrature parameters")


@dataclass(frozen=True)
class UrnSystem:
    """A agents, each a (rate function, initial count) pair.

    ``copies`` optionally repeats each listed agent, so that very large
    symmetric systems stay compact; agent indices run over the expansion.
    """

    agents: tuple[tuple[RateFunction, int], ...]
    copies: tuple[int, ...] | None = None

    def __post_init__(self):
        agents = tuple((F, int(x0)) for F, x0 in self.agents)
        object.__setattr__(self, "agents", agents)
        copies = (1,) * len(agents) if self.copies is None else tuple(int(c) for c in self.copies)
        if len(copies) != len(agents) or any(c < 1 for c in copies):
            raise DomainError("copies must give a positive multiplicity per listed agent")
        object.__setattr__(self, "copies", copies)
        object.__setattr__(self, "_ends", tuple(np.cumsum(copies).tolist()))
        if sum(copies) < 2:
            raise DomainError("an urn needs at least two agents")
        if any(x0 < 1 for _, x0 in agents):
            raise DomainError("initial counts must be >= 1")

    @classmethod
    def symmetric(cls, F: RateFunction, A: int, x0: int = 1) -> "UrnSystem":
        return cls(((F, x0),), (A,))

    @classmethod
    def parse(cls, text: str) -> "UrnSystem":
        """One ``agent=<rate-spec>@<x0>`` line per agent; '#' starts a comment."""
        agents = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, val = line.partition("=")
            if key.strip() != "agent" or not eq:
                raise ParseError("expected agent=<rate-spec>@<x0>", line)
            spec, at, x0 = val.strip().rpartition("@")
            if not at:
                raise ParseError("missing @<x0>", line)
            if not x0.isdigit():
                raise ParseError("initial count must be a positive integer", x0)
            agents.append((parse_rate(spec), int(x0)))
        return cls(tuple(agents))

    def to_text(self) -> str:
        return "".join(f"agent={format_rate(F)}@{x0}\n" for F, x0 in self.expanded())

    @property
    def A(self) -> int:
        return self._ends[-1]

    def agent(self, i: int) -> tuple[RateFunction, int]:
        if not 0 <= i < self.A:
            raise DomainError(f"agent index {i} out of range for A={self.A}")
        return self.agents[bisect.bisect_right(self._ends, i)]

    def expanded(self) -> list[tuple[RateFunction, int]]:
        if self.A > 10 ** 7:
            raise DomainError("system too large to expand")
        return [a for a, c in zip(self.agents, self.copies) for _ in range(c)]

    def group_counts(self, lo: int, hi: int, skip: int | None = None) -> dict:
        """Multiplicity of each distinct agent among indices lo..hi-1."""
        out: dict[tuple[RateFunction, int], int] = {}
        start = 0
        for agent, end in zip(self.agents, self._ends):
            n = max(0, min(hi, end) - max(lo, start))
            if skip is not None and start <= skip < end and lo <= skip < hi:
                n -= 1
            if n > 0:
                out[agent] = out.get(agent, 0) + n
            start = end
        return out

    @property
    def explosive(self) -> list[int]:
        return [i for i in range(self.A) if is_explosive(self.agent(i)[0])]

    def n_explosive(self) -> int:
        return sum(c for (F, _), c in zip(self.agents, self.copies) if is_explosive(F))

    @property
    def is_symmetric(self) -> bool:
        return len(set(self.agents)) == 1

    def model(self, i: int, N: int = 100) -> dn.ExplosionModel:
        F, x0 = self.agent(i)
        return dn.ExplosionModel(F, x0, N)


@dataclass(frozen=True)
class TailPrediction:
    """An asymptotic tail law.

    ``kind`` is one of power, exponential, log_power, stretched, band.  For
    power and log_power the exponent is that of x (or log x) in the survival
    function; for exponential it is the negated decay rate.  ``constant`` is
    None when only the order of decay is known.
    """

    kind: str
    exponent: float | None
    constant: float | None
    conditioning: str
    flags: tuple[str, ...] = ()
    curve: Callable | None = field(default=None, repr=False, compare=False)
    band_fn: Callable | None = field(default=None, repr=False, compare=False)
    details: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in ("power", "exponential", "log_power", "stretched", "band"):
            raise DomainError(f"unknown prediction kind {self.kind!r}")
        if self.constant is not None and not (math.isfinite(self.constant) and self.constant > 0):
            raise DomainError(f"constant must be finite and positive, got {self.constant}")

    def survival(self, x) -> np.ndarray:
        """Predicted tail at x (shape only when the constant is unknown)."""
        if self.curve is None:
            raise DomainError("this prediction has no evaluable curve")
        return np.asarray([self.curve(int(v)) for v in np.atleast_1d(x)], dtype=float)

    def band(self, x) -> tuple[np.ndarray, np.ndarray]:
        if self.band_fn is None:
            raise DomainError("not a band prediction")
        lo, hi = zip(*(self.band_fn(int(v)) for v in np.atleast_1d(x)))
        return np.asarray(lo), np.asarray(hi)

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "exponent": self.exponent,
                           "constant": self.constant, "conditioning": self.conditioning,
                           "flags": list(self.flags)})


# ------------------------------------------------------- quadrature grids

@dataclass(frozen=True)
class _Profile:
    s: np.ndarray
    g: np.ndarray
    sf: np.ndarray
    logsf: np.ndarray

    @property
    def hazard(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.sf > 0, self.g / self.sf, 0.0)


@lru_cache(maxsize=32)
def _profile(F: RateFunction, x0: int, N: int, step: float, s_max: float) -> _Profile:
    model = dn.ExplosionModel(F, x0, N)
    n = int(round(s_max / step))
    s = np.arange(n + 1) * step
    g = dn.explosion_density(model, s)
    cdf = dn.explosion_cdf(model, s)
    sf = dn.explosion_survival(model, s)
    with np.errstate(divide="ignore"):
        logsf = np.where(cdf < 0.5, np.log1p(-np.minimum(cdf, 0.5)), np.log(sf))
    return _Profile(s, g, sf, logsf)


class _MinLaw:
    """Grid law of S = min of explosion times over a multiset of agents."""

    def __init__(self, system: UrnSystem, lo: int, hi: int, quad: QuadratureParams,
                 skip: int | None = None):
        self.system = system
        self.quad = quad
        # non-explosive agents never bound the minimum
        counts = {k: c for k, c in system.group_counts(lo, hi, skip).items()
                  if is_explosive(k[0])}
        if not counts:
            raise DomainError("the minimum needs at least one explosive agent")
        s_max = quad.s_max
        while True:
            profiles = {key: self.profile(key, s_max) for key in counts}
            logG = sum(c * profiles[k].logsf for k, c in counts.items())
            if math.exp(logG[-1]) < quad.mass_tol or s_max >= 64 * quad.s_max:
                break
            s_max *= 2
        self.s_max = s_max
        self.s = next(iter(profiles.values())).s
        self.logG = logG
        haz = sum(c * profiles[k].hazard for k, c in counts.items())
        self.f = np.exp(logG) * haz

    def profile(self, agent: tuple[RateFunction, int], s_max: float | None = None) -> _Profile:
        F, x0 = agent
        q = self.quad
        return _profile(F, x0, q.truncation_N, q.step, self.s_max if s_max is None else s_max)

    def agent_profile(self, i: int) -> _Profile:
        return self.profile(self.system.agent(i))

    def expect(self, values: np.ndarray) -> float:
        return float(np.trapezoid(values * self.f, self.s))


def _check_explosive(system: UrnSystem, idx) -> None:
    for i in idx:
        if not is_explosive(system.agent(i)[0]):
            raise DomainError(f"agent {i} is not explosive")


# ------------------------------------------------------ birth processes

def birth_tail(model: dn.ExplosionModel, t: float, x: int) -> float:
    """Predicted P(Xi(t) > x | T > t) = hazard(t) * sum_{k>x} 1/F(k)."""
    if not t > 0:
        raise DomainError("t must be positive")
    if x < model.x0:
        raise DomainError("x must be >= x0")
    return float(dn.hazard_prefactor(model, t)) * tail_sum(model.F, x, 1).value


def birth_tail_prediction(model: dn.ExplosionModel, t: float) -> TailPrediction:
    F = model.F
    h = float(dn.hazard_prefactor(model, t))
    kind, expo = _family_shape(F)
    return TailPrediction(kind, expo, h, f"Xi({t:g}) > x given T > {t:g}",
                          curve=lambda x: h * tail_sum(F, x, 1).value)


def _family_shape(F: RateFunction, scale: float = 1.0) -> tuple[str, float | None]:
    """(kind, exponent) of the tail sum of 1/F, times ``scale`` copies."""
    G = F.tail if isinstance(F, Tabulated) else F
    if isinstance(G, Polynomial):
        return "power", scale * (1.0 - G.beta)
    if isinstance(G, Exponential):
        return "exponential", -scale * G.beta
    if isinstance(G, PolyLog):
        return "log_power", scale * (1.0 - G.beta)
    raise UnsupportedError(f"no tail shape for {format_rate(F)}")


def moment_exists(F: RateFunction, r: float) -> bool:
    """Whether sum_k k^r / F(k) converges, i.e. E[Xi(t)^r | T > t] < inf."""
    if not r > 0:
        raise DomainError("r must be positive")
    if not is_explosive(F):
        raise DomainError(f"{format_rate(F)} is not explosive")
    G = F.tail if isinstance(F, Tabulated) else F
    if isinstance(G, Polynomial):
        return G.beta - r > 1
    if isinstance(G, Exponential):
        return True
    return False  # k^r / (k log^b k) diverges for every r > 0


def _log_tail_product(F: RateFunction, c: float, x: int, tol: float = 1e-13) -> float:
    """sum_{k>x} log(1 - c/F(k)) for c < F(k), k > x, with remainder <= tol."""
    m = x + 4096
    while True:
        u = c / np.asarray(evaluate(F, np.arange(x + 1, m + 1)), dtype=float)
        if (u >= 1).any():
            raise DomainError("product factor is not positive")
        direct = math.fsum(np.log1p(-u))
        s1 = tail_sum(F, m, 1).value
        s2 = tail_sum(F, m, 2).value
        umax = c / evaluate(F, m + 1)
        s3 = tail_sum(F, m, 3).value if series_converges(F, 3) else s2 * umax
        rem3 = c ** 3 * s3 / (3.0 * (1.0 - umax))
        if rem3 <= tol or m > 1 << 22:
            return direct - c * s1 - 0.5 * c * c * s2 - 0.5 * rem3
        m *= 4


def quasi_limit_tail(F: RateFunction, x0: int, x: int) -> float:
    """lim_t P(Xi(t) > x | T > t) = 1 - prod_{k>x} (1 - F(x0)/F(k))."""
    if x < x0 or x0 < 1:
        raise DomainError("need 1 <= x0 <= x")
    if not is_explosive(F):
        raise DomainError(f"{format_rate(F)} is not explosive")
    if not is_strictly_increasing(F):
        raise DomainError(f"{format_rate(F)} is not strictly increasing")
    return -math.expm1(_log_tail_product(F, evaluate(F, x0), x))


def tail_product_constant(F: RateFunction, x0: int) -> float:
    """prod_{k>x0} F(k) / (F(k) - F(x0)) = sup_s P(T > s) exp(F(x0) s)."""
    return math.exp(-_log_tail_product(F, evaluate(F, x0), x0))


# --------------------------------------------------------------- urns

def loser_tail(system: UrnSystem, i: int, x: int | None = None,
               quad: QuadratureParams = QuadratureParams()) -> TailPrediction:
    """Tail of X_i(inf) given agent i loses.

    P(X_i(inf) = x) ~ E[g_i(S)] / F_i(x) with S the first explosion among the
    other agents; conditioning on the loss divides by P(T_i > S).
    """
    F, _ = system.agent(i)
    if not is_explosive(F):
        raise DomainError(f"agent {i} is not explosive; use sublinear_band")
    if system.n_explosive() < 2:
        raise DomainError("another agent must be explosive")
    law = _MinLaw(system, 0, system.A, quad, skip=i)
    prof = law.agent_profile(i)
    eg = law.expect(prof.g)
    plose = law.expect(prof.sf)
    const = eg / plose
    kind, expo = _family_shape(F)
    return TailPrediction(kind, expo, const, f"X_{i}(inf) > x given agent {i} loses",
                          curve=lambda v: const * tail_sum(F, v, 1).value,
                          details={"mass_constant": eg, "p_lose": plose})


def _correlation_parts(system: UrnSystem, a: int, quad: QuadratureParams):
    if not 1 <= a < system.A:
        raise DomainError(f"need 1 <= a < A, got a={a}, A={system.A}")
    _check_explosive(system, range(a))
    if system.n_explosive() < a + 1:
        raise DomainError("at least a+1 agents must be explosive")
    law = _MinLaw(system, a, system.A, quad)
    profs = [law.agent_profile(i) for i in range(a)]
    joint_g = law.expect(np.prod([p.g for p in profs], axis=0))
    logsf_all = sum(p.logsf for p in profs)
    p_all = law.expect(np.exp(logsf_all))
    single = [law.expect(np.exp(logsf_all - p.logsf) * p.g) for p in profs]
    return law, joint_g, p_all, single


def correlation_constant(system: UrnSystem, a: int, quad: QuadratureParams = QuadratureParams(),
                         method: str = "auto") -> float:
    """c(A, a): residual tail dependence among the losers 0..a-1.

    ``general`` evaluates E[prod g_i(S)] P(all lose)^(a-1) / prod_i
    E[prod_{j != i} P(T_j > S) g_i(S)].  ``symmetric`` (identical agents
    only) uses E[g(S)^a] / E[g(S')]^a (A-1)^a / (A^(a-1) (A-a)) where S is
    the minimum of A-a explosion times and S' the minimum of A-1.
    """
    if method == "auto":
        method = "symmetric" if system.is_symmetric else "general"
    if method not in ("general", "symmetric"):
        raise DomainError(f"unknown method {method!r}")
    if a == 1 and 1 < system.A:
        _check_explosive(system, [0])
        return 1.0
    if method == "general":
        _, joint_g, p_all, single = _correlation_parts(system, a, quad)
        return joint_g * p_all ** (a - 1) / math.prod(single)
    if not system.is_symmetric:
        raise DomainError("the product form needs identical agents")
    A = system.A
    if not 1 <= a < A:
        raise DomainError(f"need 1 <= a < A, got a={a}, A={A}")
    _check_explosive(system, [0])
    law_rest = _MinLaw(system, a, A, quad)
    law_one = _MinLaw(system, 1, A, quad)
    g = law_rest.agent_profile(0).g
    g1 = law_one.agent_profile(0).g
    num = law_rest.expect(g ** a)
    den = law_one.expect(g1) ** a
    # (A-1)^a / (A^(a-1) (A-a)) in log space for large A
    logfac = a * math.log(A - 1) - (a - 1) * math.log(A) - math.log(A - a)
    return num / den * math.exp(logfac)


def tailcor_constants(system: UrnSystem, a: int, target: str,
                      quad: QuadratureParams = QuadratureParams()) -> TailPrediction:
    """Tail of min, max or sum of X_0..X_{a-1} given all of them lose."""
    if target not in ("min", "max", "sum"):
        raise DomainError("target must be min, max or sum")
    Fs = [system.agent(i)[0] for i in range(a)]
    if target == "sum":
        for F in Fs:
            G = F.tail if isinstance(F, Tabulated) else F
            if not isinstance(G, (Polynomial, PolyLog)):
                raise UnsupportedError(
                    "the sum tail needs regularly varying feedback; "
                    f"{format_rate(F)} is not")
    _, joint_g, p_all, single = _correlation_parts(system, a, quad)
    cond = f"{target} of X_0..X_{a - 1} > x given agents 0..{a - 1} lose"
    shapes = [_family_shape(F) for F in Fs]
    kinds = {k for k, _ in shapes}
    flags = () if len(kinds) == 1 else ("mixed-families",)
    if target == "min":
        const = joint_g / p_all
        if "exponential" in kinds:
            kind = "exponential"
            expo = sum(e for k, e in shapes if k == "exponential")
        else:
            kind = "power" if "power" in kinds else "log_power"
            expo = sum(e for k, e in shapes if k == kind)

        def curve(x):
            return const * math.prod(tail_sum(F, x, 1).value for F in Fs)
    else:
        consts = [s / p_all for s in single]
        const = sum(consts)
        order = {"log_power": 0, "power": 1, "exponential": 2}
        kind = min(kinds, key=order.get)
        expo = max(e for k, e in shapes if k == kind)

        def curve(x):
            return sum(c * tail_sum(F, x, 1).value for c, F in zip(consts, Fs))
    return TailPrediction(kind, expo, const, cond, flags, curve=curve,
                          details={"joint_mass_constant": joint_g, "p_all_lose": p_all})


def sublinear_band(system: UrnSystem, i: int, x: int | None = None) -> TailPrediction:
    """Two-sided bound on -log P(X_i(inf) > x) for a non-explosive agent i.

    With d the sum of F_j(x0_j) over explosive agents and H_p the head sums
    of F_i^-p from x0_i to x,

        d H_1 - d^2 H_2 - C  <=  -log P(X_i(inf) > x)  <=  d H_1,

    where C = sum_j log prod_{k > x0_j} F_j(k)/(F_j(k) - F_j(x0_j)) bounds
    P(T_j > s) exp(F_j(x0_j) s) from above.
    """
    F, x0 = system.agent(i)
    if is_explosive(F):
        raise DomainError(f"agent {i} is explosive; use loser_tail")
    if not diverges(F):
        raise DomainError(f"the band needs diverging feedback; {format_rate(F)} does not diverge")
    groups = [(agent, c) for agent, c in system.group_counts(0, system.A).items()
              if is_explosive(agent[0])]
    if not groups:
        raise DomainError("the band needs an explosive agent")
    for (Fj, _), _c in groups:
        if not is_strictly_increasing(Fj):
            raise DomainError(f"explosive agent {format_rate(Fj)} is not strictly increasing")
    d = sum(c * evaluate(Fj, xj) for (Fj, xj), c in groups)
    C = sum(c * math.log(tail_product_constant(Fj, xj)) for (Fj, xj), c in groups)

    def band(v):
        h1 = head_sum(F, x0, v, 1).value
        h2 = head_sum(F, x0, v, 2).value
        return d * h1 - d * d * h2 - C, d * h1

    G = F.tail if isinstance(F, Tabulated) else F
    if isinstance(G, Polynomial) and G.beta == 1:
        kind, expo = "power", -d / G.alpha
    elif isinstance(G, Polynomial):
        kind, expo = "stretched", 1.0 - G.beta
    elif isinstance(G, PolyLog) and G.beta == 1:
        kind, expo = "log_power", -d
    else:
        kind, expo = "band", None
    return TailPrediction("band", expo, None, f"-log P(X_{i}(inf) > x)",
                          ("band-for-minus-log",), band_fn=band,
                          details={"d": d, "C": C, "shape": kind})


# ------------------------------------------------------ monopoly times

def _poly_beta(F: RateFunction) -> float | None:
    G = F.tail if isinstance(F, Tabulated) else F
    return G.beta if isinstance(G, Polynomial) else None


def monopoly_tail(system: UrnSystem, winner: int, n: int | None = None,
                  ef_loser: float | None = None) -> TailPrediction:
    """Order of decay of P(N_mon > n | winner monopolizes).

    ``ef_loser`` is E[F_loser(X_loser(inf))] for the sub-linear case; it has
    no closed form and must come from simulation.
    """
    Fw, x0w = system.agent(winner)
    if not is_explosive(Fw):
        raise DomainError(f"agent {winner} is not explosive")
    losers = [j for j in range(system.A) if j != winner]
    for j in [winner] + losers:
        G = system.agent(j)[0]
        G = G.tail if isinstance(G, Tabulated) else G
        if not isinstance(G, (Polynomial, Exponential)):
            raise UnsupportedError("monopoly times are covered for polynomial and "
                                   "exponential feedback only")
    b1 = _poly_beta(Fw)
    if b1 is None:
        raise UnsupportedError("an exponential winner is not covered")
    cond = f"N_mon > n given agent {winner} wins"
    betas = {j: _poly_beta(system.agent(j)[0]) for j in losers}
    sub = [j for j in losers if betas[j] is not None and betas[j] <= 1]
    sup = [j for j in losers if betas[j] is not None and betas[j] > 1]
    if sub:
        if system.A != 2:
            raise UnsupportedError("the sub-linear loser case is covered for two agents only")
        bl = betas[sub[0]]
        if bl == 1 and not x0w > b1:
            raise AssumptionError("a linear loser needs the winner's initial count to exceed "
                                  "its exponent")
        flags = ("estimated-constant",) if ef_loser is not None else ("shape-only",)
        const = ef_loser
        return TailPrediction("power", 1.0 - b1, const, cond, flags,
                              curve=lambda v: (ef_loser or 1.0) * tail_sum(Fw, v - 1, 1).value)
    if sup:
        b2 = min(betas[j] for j in sup)
        beta = (b1 - 1.0) / b2
        mass = beta - b1 if b1 <= b2 + 1 else -b2
        return TailPrediction("power", mass + 1.0, None, cond, (COND_MONTIME,),
                              curve=lambda v: float(v) ** (mass + 1.0),
                              details={"mass_exponent": mass, "weakest_loser_beta": b2})
    # every loser has exponential feedback
    return TailPrediction("power", 1.0 - b1, None, cond, (COND_MONTIME, "log-factor"),
                          curve=lambda v: float(v) ** (1.0 - b1) * math.log(v),
                          details={"mass_exponent": -b1})


def share_regime(system: UrnSystem, winner: int) -> str:
    if system.A != 2:
        raise UnsupportedError("share regimes are defined for two agents")
    b1 = _poly_beta(system.agent(winner)[0])
    b2 = _poly_beta(system.agent(1 - winner)[0])
    if b1 is None or b2 is None or b1 <= 1 or b2 <= 1:
        raise UnsupportedError("share regimes need two super-linear polynomial agents")
    if b1 < b2 + 1:
        return "loser_share_vanishes"
    if b1 == b2 + 1:
        return "intermediate"
    return "loser_share_dominates"
