from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from birthtail import analytics as an
from birthtail.asymptotics import TailPrediction
from birthtail.errors import (DegenerateSampleError, DomainError, EmptySampleError,
                              InsufficientDataError, RangeError)
from birthtail.sim.rng import RngStream

samples = st.lists(st.integers(1, 60), min_size=1, max_size=200)


def pareto(n, alpha, seed=1):
    return RngStream(seed).uniforms(n) ** (-1.0 / alpha)


def power_prediction(expo, const=1.0):
    return TailPrediction("power", expo, const, "test", curve=lambda x: const * x ** expo)


# --------------------------------------------------------- empirical survival

def test_empirical_survival_counts():
    es = an.empirical_survival([1, 1, 2, 5])
    np.testing.assert_array_equal(es.support, [1, 2, 5])
    np.testing.assert_allclose(es.survival, [0.5, 0.25, 0.0])
    np.testing.assert_allclose(es.at([0, 1, 3, 9]), [1.0, 0.5, 0.25, 0.0])
    assert es.to_csv().splitlines()[0] == "value,survival,n,conditioning"


def test_conditioning_mask_and_callable():
    x = np.array([1, 2, 3, 4])
    a = an.empirical_survival(x, x > 2)
    b = an.empirical_survival(x, lambda v: v > 2, "x > 2")
    assert a.n == b.n == 2
    np.testing.assert_allclose(a.survival, b.survival)
    assert b.conditioning == "x > 2"
    with pytest.raises(EmptySampleError):
        an.empirical_survival(x, x > 10)


@given(samples)
def test_survival_non_increasing_in_unit_interval(xs):
    es = an.empirical_survival(xs)
    assert np.all(np.diff(es.survival) <= 0)
    assert es.survival[-1] == 0 and np.all(es.survival >= 0)


@given(samples, samples)
def test_merged_survival_is_the_mixture(a, b):
    merged = an.merge_survivals([an.empirical_survival(a), an.empirical_survival(b)])
    pooled = an.empirical_survival(a + b)
    np.testing.assert_array_equal(merged.support, pooled.support)
    np.testing.assert_allclose(merged.survival, pooled.survival)
    na, nb = len(a), len(b)
    x = pooled.support
    mix = (na * an.empirical_survival(a).at(x) + nb * an.empirical_survival(b).at(x)) / (na + nb)
    np.testing.assert_allclose(merged.survival, mix)


def test_survival_validation():
    with pytest.raises(DomainError):
        an.EmpiricalSurvival(np.array([1, 2]), np.array([0.2, 0.5]), 2)


# ------------------------------------------------------------------ fitting

def test_fit_recovers_pareto_slope():
    es = an.empirical_survival(pareto(100_000, 1.0))
    fit = an.fit_power_tail(es)
    assert fit.slope == pytest.approx(-1.0, abs=0.05)
    assert fit.points >= an.MIN_FIT_POINTS


def test_fit_loglinear_geometric():
    g = np.floor(-np.log(RngStream(2).uniforms(100_000)) / 0.5)
    fit = an.fit_power_tail(an.empirical_survival(g), transform="loglinear", fit_range=(0.3, 0.999))
    assert fit.slope == pytest.approx(-0.5, abs=0.03)


@given(st.floats(0.1, 100.0), st.floats(0.5, 3.0))
@settings(max_examples=20, deadline=None)
def test_ols_scale_equivariance(scale, alpha):
    x = pareto(3000, alpha, seed=4)
    base = an.fit_power_tail(an.empirical_survival(x))
    scaled = an.fit_power_tail(an.empirical_survival(x * scale))
    assert scaled.slope == pytest.approx(base.slope, rel=1e-9, abs=1e-9)
    assert scaled.intercept == pytest.approx(base.intercept - base.slope * math.log(scale),
                                             rel=1e-9, abs=1e-9)


def test_fit_errors():
    es = an.empirical_survival([1, 2, 3])
    with pytest.raises(InsufficientDataError):
        an.fit_power_tail(es)
    with pytest.raises(DomainError):
        an.fit_power_tail(es, transform="cubic")
    with pytest.raises(DomainError):
        an.fit_power_tail(es, fit_range=(0.9, 0.1))


def test_rescaled_fit_flattens_known_law():
    x = np.arange(3, 2000)  # log(x) / x decreases from x = 3 on
    surv = 1.0 / x * np.log(x)
    surv = surv / surv[0] * 0.999
    es = an.EmpiricalSurvival(x, np.minimum.accumulate(surv), 10 ** 6)
    fit = an.fit_power_tail(es, rescale=lambda v: v / np.log(v), fit_range=(0.0, 1.0))
    assert abs(fit.slope) < 1e-9


def test_hill_estimator():
    assert an.hill_estimator(pareto(200_000, 1.5), 2000) == pytest.approx(1.5, rel=0.06)
    with pytest.raises(InsufficientDataError):
        an.hill_estimator([1.0, 2.0], 5)


# -------------------------------------------------------------- comparison

def test_compare_prediction_pass_and_fail():
    # floor of a Pareto(1) sample exceeds the integer x with probability 1 / (x + 1)
    es = an.empirical_survival(np.floor(pareto(50_000, 1.0)).astype(int))
    exact = TailPrediction("power", -1.0, 1.0, "test", curve=lambda v: 1.0 / (v + 1))
    good = an.compare_prediction(es, exact, (2, 30))
    bad = an.compare_prediction(es, power_prediction(-1.0, 3.0), (2, 30))
    assert good.verdict == "pass" and bad.verdict == "fail"
    assert '"verdict": "pass"' in good.to_json()


def test_compare_prediction_range_errors():
    es = an.empirical_survival([1, 2, 3])
    with pytest.raises(RangeError):
        an.compare_prediction(es, power_prediction(-1.0), (100, 200))
    zero = TailPrediction("power", -1.0, None, "z", curve=lambda v: 0.0)
    with pytest.raises(RangeError):
        an.compare_prediction(es, zero)


@given(st.floats(0.01, 1.0), st.floats(0.0, 1.0), st.floats(0.5, 2.0))
@settings(max_examples=30, deadline=None)
def test_compare_verdict_monotone_in_tolerance(tol, extra, const):
    # the empirical survival at v is 1 - v / 49, so every ratio equals 1 / const
    es = an.empirical_survival(np.arange(1, 50))
    pred = TailPrediction("power", -1.0, const, "t", curve=lambda v: const * (1 - v / 49))
    loose = an.compare_prediction(es, pred, tolerance=tol + extra)
    tight = an.compare_prediction(es, pred, tolerance=tol)
    if tight.verdict == "pass":
        assert loose.verdict == "pass"
    expected = abs(math.log(const)) <= math.log1p(tol) * (1 + 1e-12)
    assert (tight.verdict == "pass") == expected or abs(abs(math.log(const))
                                                        - math.log1p(tol)) < 1e-9


# --------------------------------------------------------- correlation, KS

def test_pearson_log_corr_independent_and_dependent():
    u = RngStream(5).uniforms(40_000).reshape(2, -1)
    r, (lo, hi) = an.pearson_log_corr(np.column_stack([1 / u[0], 1 / u[1]]))
    assert lo < 0 < hi
    r, (lo, _) = an.pearson_log_corr(np.column_stack([1 / u[0], 1 / (u[0] * u[1])]))
    assert lo > 0.5


def test_pearson_errors():
    with pytest.raises(InsufficientDataError):
        an.pearson_log_corr([[1, 2], [2, 3]])
    with pytest.raises(DomainError):
        an.pearson_log_corr([[1, 2], [2, 3], [0, 1]])
    with pytest.raises(DegenerateSampleError):
        an.pearson_log_corr([[1, 2], [1, 3], [1, 4]])


def test_ks_exponential():
    e = -np.log(RngStream(6).uniforms(20_000))
    assert an.ks_exponential(e) < 0.015
    assert an.ks_exponential(2 * e) > 0.2
    with pytest.raises(InsufficientDataError):
        an.ks_exponential([1.0])
