from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from birthtail import asymptotics as asy
from birthtail import density as dn
from birthtail.errors import (AssumptionError, DomainError, ParseError, UnsupportedError)
from birthtail.rates import evaluate, parse_rate, tail_sum
from birthtail.sim import birth
from birthtail.sim.rng import RngStream

K2 = parse_rate("poly:alpha=1,beta=2")
K3 = parse_rate("poly:alpha=1,beta=3")
K4 = parse_rate("poly:alpha=1,beta=4")
EXP1 = parse_rate("exp:beta=1")
PLOG2 = parse_rate("polylog:beta=2")
LIN = parse_rate("poly:alpha=1,beta=1")
QUAD = asy.QuadratureParams()


def two(F1, F2, x1=1, x2=1):
    return asy.UrnSystem(((F1, x1), (F2, x2)))


# ------------------------------------------------------------------ systems

def test_system_parse_round_trip():
    text = "agent=poly:alpha=1,beta=2@1\n# comment\nagent=exp:beta=1@3  # trailing\n"
    system = asy.UrnSystem.parse(text)
    assert system.A == 2 and system.agent(1) == (EXP1, 3)
    assert asy.UrnSystem.parse(system.to_text()) == system


@pytest.mark.parametrize("text", ["agent=poly:alpha=1,beta=2", "player=exp:beta=1@1",
                                  "agent=exp:beta=1@x"])
def test_system_parse_errors(text):
    with pytest.raises(ParseError):
        asy.UrnSystem.parse(text + "\nagent=exp:beta=1@1")


def test_system_validation():
    with pytest.raises(DomainError):
        asy.UrnSystem(((K2, 1),))
    with pytest.raises(DomainError):
        two(K2, K2, 0, 1)
    big = asy.UrnSystem.symmetric(K2, 10 ** 9)
    assert big.A == 10 ** 9 and big.agent(10 ** 9 - 1) == (K2, 1) and big.is_symmetric
    with pytest.raises(DomainError):
        big.agent(10 ** 9)


# ------------------------------------------------------------ birth tails

@pytest.mark.parametrize("F,kind,expo", [(K2, "power", -1.0), (K3, "power", -2.0),
                                         (EXP1, "exponential", -1.0),
                                         (PLOG2, "log_power", -1.0)])
def test_birth_tail_shapes(F, kind, expo):
    model = dn.ExplosionModel(F)
    pred = asy.birth_tail_prediction(model, 1.0)
    assert (pred.kind, pred.exponent) == (kind, expo)
    h = float(dn.hazard_prefactor(model, 1.0))
    assert asy.birth_tail(model, 1.0, 10) == pytest.approx(h * tail_sum(F, 10).value)


def test_birth_tail_poly_is_power_law():
    model = dn.ExplosionModel(K2)
    x = np.array([1000, 2000])
    v = [asy.birth_tail(model, 1.0, int(k)) for k in x]
    # sum_{k>x} k^-2 ~ 1/x for the quadratic rate
    assert v[0] / v[1] == pytest.approx(2.0, rel=1e-3)


def test_birth_tail_exponential_decay_constant():
    model = dn.ExplosionModel(EXP1)
    h = float(dn.hazard_prefactor(model, 1.0))
    x = 7
    expect = h * math.exp(-(x + 1)) * math.e / (math.e - 1) * math.e
    # sum_{k>x} e^{-(k-1)} = e^{-x} e/(e-1)
    assert asy.birth_tail(model, 1.0, x) == pytest.approx(h * math.exp(-x) * math.e / (math.e - 1))
    assert expect > 0


def test_birth_tail_errors():
    with pytest.raises(DomainError):
        asy.birth_tail(dn.ExplosionModel(K2), 0.0, 5)
    with pytest.raises(DomainError):
        asy.birth_tail(dn.ExplosionModel(K2, 3), 1.0, 2)


@pytest.mark.parametrize("F,r,exists", [(K3, 1, True), (K2, 1, False), (EXP1, 100, True),
                                        (PLOG2, 0.5, False)])
def test_moment_exists(F, r, exists):
    assert asy.moment_exists(F, r) is exists


def test_moment_exists_errors():
    with pytest.raises(DomainError):
        asy.moment_exists(LIN, 1)
    with pytest.raises(DomainError):
        asy.moment_exists(K2, 0)


# ------------------------------------------------------------- quasi-limit

def direct_quasi_limit(F, x0, x, terms=2_000_000):
    k = np.arange(x + 1, x + terms, dtype=float)
    return -math.expm1(math.fsum(np.log1p(-evaluate(F, x0) / evaluate(F, k))))


@pytest.mark.parametrize("F,x0,x", [(K2, 1, 1), (K2, 2, 2), (K2, 2, 9), (K3, 1, 4),
                                    (EXP1, 1, 3), (EXP1, 2, 5)])
def test_quasi_limit_matches_direct_product(F, x0, x):
    # the truncated product drops about F(x0) / terms for k^2, so 5e-6 covers it
    assert asy.quasi_limit_tail(F, x0, x) == pytest.approx(direct_quasi_limit(F, x0, x),
                                                           rel=1e-6, abs=5e-6)


def test_quasi_limit_closed_forms():
    assert asy.quasi_limit_tail(K2, 1, 1) == pytest.approx(0.5, abs=1e-12)
    # 1 - prod_{k>2} (1 - 4/k^2) = 1 - 1/6
    assert asy.quasi_limit_tail(K2, 2, 2) == pytest.approx(5 / 6, abs=1e-12)
    assert asy.quasi_limit_tail(K2, 1, 10 ** 4) < 1e-3


@given(st.integers(1, 5), st.integers(0, 200))
@settings(max_examples=40, deadline=None)
def test_quasi_limit_decreasing(x0, dx):
    x = x0 + dx
    assert asy.quasi_limit_tail(K2, x0, x + 1) < asy.quasi_limit_tail(K2, x0, x)


def test_quasi_limit_recovers_birth_tail_shape():
    for x in (2000, 20000):
        ratio = asy.quasi_limit_tail(K2, 1, x) / (evaluate(K2, 1) * tail_sum(K2, x).value)
        assert ratio == pytest.approx(1.0, abs=2 / x)


def test_quasi_limit_matches_long_run_simulation():
    # conditioned on survival to t = 4 the state law is close to its limit
    res = birth.simulate_birth_batch(K2, 1, 4.0, 200_000, 11)
    alive = res["state"][res["state"] >= 0]
    for x in (1, 2, 4):
        p = float(np.mean(alive > x))
        se = math.sqrt(p * (1 - p) / len(alive))
        assert abs(p - asy.quasi_limit_tail(K2, 1, x)) < 4 * se + 2e-3


def test_quasi_limit_errors():
    with pytest.raises(DomainError):
        asy.quasi_limit_tail(LIN, 1, 3)
    with pytest.raises(DomainError):
        asy.quasi_limit_tail(parse_rate("table:values=9;1,tail=poly|alpha=1,beta=2"), 1, 3)
    with pytest.raises(DomainError):
        asy.quasi_limit_tail(K2, 3, 2)


# --------------------------------------------------------------- loser tails

def test_loser_tail_symmetric_power_law():
    pred = asy.loser_tail(two(K2, K2), 0)
    assert pred.kind == "power" and pred.exponent == -1.0
    # the curve is the exact tail sum, whose log slope is -1 only for large x
    x = np.array([100, 10000])
    s = pred.survival(x)
    slope = (math.log(s[1]) - math.log(s[0])) / (math.log(x[1]) - math.log(x[0]))
    assert slope == pytest.approx(-1.0, abs=0.01)
    assert pred.details["p_lose"] == pytest.approx(0.5, abs=1e-6)


def test_loser_tail_shape_independent_of_other_agent():
    a = asy.loser_tail(two(K2, EXP1), 0)
    b = asy.loser_tail(two(K2, K3), 0)
    assert a.exponent == b.exponent == -1.0
    assert a.constant != pytest.approx(b.constant, rel=1e-3)


def test_loser_tail_mass_constant_monte_carlo():
    system = two(K2, EXP1)
    pred = asy.loser_tail(system, 0)
    S, _ = birth.sample_explosion_times(EXP1, 1, 100_000, 5)
    g = dn.explosion_density(dn.ExplosionModel(K2), S)
    mean, se = g.mean(), g.std() / math.sqrt(len(g))
    assert abs(mean - pred.details["mass_constant"]) < 3 * se


def test_loser_tail_errors():
    with pytest.raises(DomainError):
        asy.loser_tail(two(LIN, K2), 0)
    with pytest.raises(DomainError):
        asy.loser_tail(two(K2, LIN), 0)


# ------------------------------------------------------ correlation constant

def test_c_of_one_is_one():
    assert asy.correlation_constant(asy.UrnSystem.symmetric(K2, 5), 1, QUAD) == 1.0


@pytest.mark.parametrize("F,A,target", [(K2, 3, 1.121), (EXP1, 100, 1.374)])
def test_c_table_examples(F, A, target):
    assert asy.correlation_constant(asy.UrnSystem.symmetric(F, A), 2, QUAD) == pytest.approx(
        target, abs=0.01)


def test_general_and_symmetric_forms_agree():
    system = asy.UrnSystem(((K2, 1), (K2, 1), (K2, 1), (K2, 1)))
    sym = asy.correlation_constant(asy.UrnSystem.symmetric(K2, 4), 2, QUAD, "symmetric")
    gen = asy.correlation_constant(system, 2, QUAD, "general")
    assert gen == pytest.approx(sym, rel=1e-6)


@pytest.mark.parametrize("F", [K2, EXP1, PLOG2])
def test_c_above_one_and_non_decreasing(F):
    values = [asy.correlation_constant(asy.UrnSystem.symmetric(F, A), 2, QUAD)
              for A in (3, 10, 100, 1000, 10 ** 6)]
    assert values[0] > 1
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_c_direction_of_factorial_limit():
    c = asy.correlation_constant(asy.UrnSystem.symmetric(K2, 10 ** 6), 2, QUAD)
    assert 1.7 < c < 2.0


def test_c_errors():
    with pytest.raises(DomainError):
        asy.correlation_constant(asy.UrnSystem.symmetric(K2, 3), 3, QUAD)
    with pytest.raises(DomainError):
        asy.correlation_constant(asy.UrnSystem(((K2, 1), (K2, 1), (LIN, 1))), 2, QUAD)
    with pytest.raises(DomainError):
        asy.correlation_constant(two(K2, EXP1), 1, QUAD, "bogus")


# ------------------------------------------------------------- joint tails

def test_tailcor_min_exponent():
    system = asy.UrnSystem(((K2, 1), (K3, 1), (K4, 1)))
    pred = asy.tailcor_constants(system, 2, "min", QUAD)
    # A - 1 - beta_1 - ... - beta_{A-1} with A - 1 = 2 losers
    assert pred.exponent == pytest.approx(2 - 2 - 3)


def test_tailcor_max_and_sum_agree():
    system = asy.UrnSystem(((K2, 1), (K3, 1), (K4, 1)))
    mx = asy.tailcor_constants(system, 2, "max", QUAD)
    sm = asy.tailcor_constants(system, 2, "sum", QUAD)
    assert mx.exponent == sm.exponent == -1.0
    assert mx.constant == pytest.approx(sm.constant)


def test_tailcor_single_agent_equals_loser_tail():
    system = asy.UrnSystem(((K2, 1), (EXP1, 1), (K3, 1)))
    base = asy.loser_tail(system, 0)
    for target in ("min", "max", "sum"):
        pred = asy.tailcor_constants(system, 1, target, QUAD)
        assert pred.constant == pytest.approx(base.constant, rel=1e-9)
        assert pred.exponent == base.exponent


def test_tailcor_sum_needs_regular_variation():
    with pytest.raises(UnsupportedError):
        asy.tailcor_constants(asy.UrnSystem.symmetric(EXP1, 3), 2, "sum", QUAD)


def test_pareto_sum_tail():
    stream = RngStream(3)
    # the sum tail approaches the sum of tails with relative error near alpha E[X] / x
    u = stream.uniforms(4_000_000).reshape(2, -1)
    x1, x2 = u[0] ** (-1 / 1.5), u[1] ** (-1 / 2.0)
    for x in (100.0, 200.0, 300.0):
        ratio = np.mean(x1 + x2 > x) / (np.mean(x1 > x) + np.mean(x2 > x))
        assert ratio == pytest.approx(1.0, rel=0.1)


# ------------------------------------------------------------ sub-linear band

def test_sublinear_band_linear_loser():
    system = two(LIN, K2)
    pred = asy.sublinear_band(system, 0)
    assert pred.details["shape"] == "power" and pred.exponent == -1.0
    xs = np.arange(1, 200)
    lo, hi = pred.band(xs)
    assert np.all(lo <= hi)
    assert pred.details["C"] == pytest.approx(math.log(2.0))


def test_sublinear_band_width_shrinks_relatively():
    pred = asy.sublinear_band(two(parse_rate("poly:alpha=1,beta=0.75"), K2), 0)
    lo, hi = pred.band(np.array([100, 10_000]))
    width = hi - lo
    assert width[1] / hi[1] < width[0] / hi[0]


def test_sublinear_band_xlogx_loser():
    pred = asy.sublinear_band(two(parse_rate("polylog:beta=1"), K2), 0)
    assert pred.details["shape"] == "log_power"


def test_sublinear_band_errors():
    with pytest.raises(DomainError):
        asy.sublinear_band(two(parse_rate("const:lambda=1"), K2), 0)
    with pytest.raises(DomainError):
        asy.sublinear_band(two(K2, K2), 0)
    with pytest.raises(DomainError):
        asy.sublinear_band(two(LIN, LIN), 0)


# ------------------------------------------------------------- monopoly time

@pytest.mark.parametrize("b1,b2,mass", [(3, 2, -2.0), (4, 2, -2.0), (2, 2, -1.5)])
def test_monopoly_exponents(b1, b2, mass):
    system = two(parse_rate(f"poly:alpha=1,beta={b1}"), parse_rate(f"poly:alpha=1,beta={b2}"))
    pred = asy.monopoly_tail(system, 0)
    assert pred.details["mass_exponent"] == mass
    assert pred.exponent == mass + 1
    assert asy.COND_MONTIME in pred.flags


def test_monopoly_mixed_has_log_factor():
    pred = asy.monopoly_tail(two(K2, EXP1), 0)
    assert pred.details["mass_exponent"] == -2.0 and "log-factor" in pred.flags


def test_monopoly_sublinear_cases():
    pred = asy.monopoly_tail(two(K2, parse_rate("poly:alpha=1,beta=0.5")), 0, ef_loser=1.7)
    assert pred.exponent == -1.0 and pred.constant == 1.7
    with pytest.raises(AssumptionError):
        asy.monopoly_tail(two(K2, LIN), 0)
    assert asy.monopoly_tail(two(K2, LIN, 3, 1), 0).exponent == -1.0


def test_monopoly_unsupported():
    with pytest.raises(UnsupportedError):
        asy.monopoly_tail(two(EXP1, K2), 0)
    with pytest.raises(UnsupportedError):
        asy.monopoly_tail(two(PLOG2, K2), 0)


@pytest.mark.parametrize("b1,regime", [(2.5, "loser_share_vanishes"), (3, "intermediate"),
                                       (4, "loser_share_dominates")])
def test_share_regime(b1, regime):
    system = two(parse_rate(f"poly:alpha=1,beta={b1}"), K2)
    assert asy.share_regime(system, 0) == regime


def test_share_regime_unsupported():
    with pytest.raises(UnsupportedError):
        asy.share_regime(two(K2, EXP1), 0)


def test_prediction_validation_and_json():
    with pytest.raises(DomainError):
        asy.TailPrediction("weird", -1.0, None, "x")
    with pytest.raises(DomainError):
        asy.TailPrediction("power", -1.0, -2.0, "x")
    pred = asy.TailPrediction("power", -1.0, 2.0, "x", curve=lambda v: 2.0 / v)
    assert '"kind": "power"' in pred.to_json()
    with pytest.raises(DomainError):
        pred.band([1])
