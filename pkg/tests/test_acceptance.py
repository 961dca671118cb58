"""The fourteen acceptance criteria, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line; the lines are repeated in the pytest
terminal summary. Run alone with ``pytest tests/test_acceptance.py -v``.
"""

from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.signal import lfilter

from birthtail import analytics as an
from birthtail import asymptotics as asy
from birthtail import density as dn
from birthtail import experiments as ex
from birthtail.rates import evaluate, parse_rate, tail_sum
from birthtail.sim import birth, urn

SEED = 20240101
K2 = parse_rate("poly:alpha=1,beta=2")
K3 = parse_rate("poly:alpha=1,beta=3")
EXP1 = parse_rate("exp:beta=1")
PLOG2 = parse_rate("polylog:beta=2")

pytestmark = pytest.mark.acceptance


def conv_exp(f: np.ndarray, lam: float, h: float) -> np.ndarray:
    """Grid convolution of f (linear on each cell) with the Exp(lam) density."""
    decay = math.exp(-lam * h)
    i0 = -math.expm1(-lam * h) / lam
    i1 = h / lam - i0 / lam
    inc = lam * (f[1:] * (i1 / h) + f[:-1] * (i0 - i1 / h))
    out = np.zeros_like(f)
    out[1:] = lfilter([1.0], [1.0, -decay], inc)
    return out


def convolution_oracle(rates, t_max: float, h: float):
    t = np.arange(round(t_max / h) + 1) * h
    f = rates[0] * np.exp(-rates[0] * t)
    for lam in rates[1:]:
        f = conv_exp(f, lam, h)
    return t, f


def test_ac01_hypoexponential_oracle(report_line):
    start = time.perf_counter()
    rates = (1.0, 2.5, 7.0)
    t, oracle = convolution_oracle(rates, 10.0, 1e-4)
    zhu = dn.hypoexp_density(dn.HypoExpSpec(rates), t)
    err = float(np.max(np.abs(zhu - oracle)))
    ok = report_line("AC1", err < 1e-8, f"max |zhu - convolution| = {err:.2e} (< 1e-8)",
                     time.perf_counter() - start, 1)
    assert ok


FIG1 = {"poly": (K2, {0.3: 0.0010, 1.0: 0.3112, 3.0: 0.9088}),
        "exp": (EXP1, {0.3: 0.0030, 1.0: 0.3424, 3.0: 0.8974})}
# sojourns kept for the exact reference column; the dropped mean is below 4e-4
EXACT_TRUNCATION = {"poly": 3000, "exp": 100}


def test_ac02_explosion_fractions(report_line):
    start = time.perf_counter()
    rows, ok = [], True
    for name, (F, targets) in FIG1.items():
        for t, target in targets.items():
            res = birth.simulate_birth_batch(F, 1, t, 10_000, SEED)
            frac = float(res["exploded"].mean())
            exact = float(dn.explosion_cdf(dn.ExplosionModel(F, 1, EXACT_TRUNCATION[name]), t))
            good = abs(frac - target) <= 0.015
            ok &= good
            rows.append(f"{name} t={t:g}: {frac:.4f} vs {target} (exact {exact:.4f})"
                        + ("" if good else " OUT"))
    ok = report_line("AC2", ok, "; ".join(rows), time.perf_counter() - start, 30)
    assert ok


def test_ac03_birth_tail_parity(report_line):
    start = time.perf_counter()
    model = dn.ExplosionModel(K2)
    res = birth.simulate_birth_batch(K2, 1, 1.0, 100_000, SEED)
    alive = res["state"] >= 0
    es = an.empirical_survival(res["state"], alive, "T > 1")
    xs = np.arange(10, 41)
    predicted = float(dn.hazard_prefactor(model, 1.0)) * np.array(
        [tail_sum(K2, int(x)).value for x in xs])
    ratio = es.at(xs) / predicted
    ok = bool(np.all((ratio >= 0.8) & (ratio <= 1.25)))
    ok = report_line("AC3", ok, f"ratio range [{ratio.min():.3f}, {ratio.max():.3f}] "
                     f"over x in [10, 40], n={es.n}", time.perf_counter() - start, 60)
    assert ok


def test_ac04_hazard_limit(report_line):
    start = time.perf_counter()
    errs = {}
    for F in (K2, EXP1, PLOG2):
        h = float(dn.hazard_prefactor(dn.ExplosionModel(F), 50.0))
        f1 = float(evaluate(F, 1))
        errs[F.spec] = abs(h - f1) / f1
    ok = all(e < 0.01 for e in errs.values())
    ok = report_line("AC4", ok, ", ".join(f"{k}: {v:.1e}" for k, v in errs.items()),
                     time.perf_counter() - start, 1)
    assert ok


def test_ac05_quasi_limit(report_line):
    start = time.perf_counter()
    xs = range(1, 101)
    err = max(abs(asy.quasi_limit_tail(K2, 1, x) - 1 / (x + 1)) for x in xs)
    ok = report_line("AC5", err < 1e-9, f"max error {err:.1e} over x in [1, 100]",
                     time.perf_counter() - start, 1)
    assert ok


def test_ac06_c_table(report_line):
    start = time.perf_counter()
    quad = asy.QuadratureParams(step=1e-4, s_max=50.0, truncation_N=100)
    worst, cells = 0.0, 0
    for spec, row in ex.TABLE_C.items():
        F = parse_rate(spec)
        for A, target in zip(ex.TABLE_C_AGENTS, row):
            c = asy.correlation_constant(asy.UrnSystem.symmetric(F, A), 2, quad)
            worst = max(worst, abs(c - target))
            cells += 1
    ok = report_line("AC6", cells == 15 and worst <= 0.01,
                     f"{cells} cells, max |c - table| = {worst:.4f}",
                     time.perf_counter() - start, 300)
    assert ok


def test_ac07_c_ratio_direction(report_line):
    start = time.perf_counter()
    quad = asy.QuadratureParams(step=1e-4, s_max=50.0, truncation_N=100)
    system = asy.UrnSystem.symmetric(K2, 1000)
    c = {a: asy.correlation_constant(system, a, quad) for a in (2, 3, 9, 10)}
    r3, r10 = c[3] / c[2], c[10] / c[9]
    c_big = asy.correlation_constant(asy.UrnSystem.symmetric(K2, 10 ** 6), 2, quad)
    ok = abs(r3 - 2.04) <= 0.15 and abs(r10 - 4.37) <= 0.15 and 1.7 < c_big < 2.0
    ok = report_line("AC7", ok, f"ratio(1e3,3)={r3:.3f}, ratio(1e3,10)={r10:.3f}, "
                     f"c(1e6,2)={c_big:.3f}", time.perf_counter() - start, 300)
    assert ok


def _loser_slope(system, replicates=100_000):
    res = urn.simulate_urn_embedded_batch(system, replicates, SEED)
    es = an.empirical_survival(res["x_inf"][:, 0], res["winner"] != 0, "agent 0 loses")
    return an.fit_power_tail(es)


def test_ac08_loser_exponents(report_line):
    start = time.perf_counter()
    fits = {"(k2,k3)": _loser_slope(asy.UrnSystem(((K2, 1), (K3, 1)))),
            "(k2,e^k)": _loser_slope(asy.UrnSystem(((K2, 1), (EXP1, 1))))}
    ok = all(abs(f.slope + 1) <= 0.15 for f in fits.values())
    ok = report_line("AC8", ok, ", ".join(f"{k} slope {f.slope:.3f}" for k, f in fits.items()),
                     time.perf_counter() - start, 120)
    assert ok


def test_ac09_monopoly_time(report_line):
    start = time.perf_counter()
    detail = []
    res = urn.simulate_urn_embedded_batch(asy.UrnSystem(((K3, 1), (K2, 1))), 100_000, SEED)
    es = an.empirical_survival(res["n_mon"], res["winner"] == 0, "agent 0 wins")
    pure = an.fit_power_tail(es)
    detail.append(f"(k3 wins, k2) slope {pure.slope:.3f}")
    res = urn.simulate_urn_embedded_batch(asy.UrnSystem(((K2, 1), (EXP1, 1))), 100_000, SEED)
    es = an.empirical_survival(res["n_mon"], res["winner"] == 0, "agent 0 wins")
    with np.errstate(divide="ignore"):  # n = 1 has log n = 0 and is dropped by the fit
        mixed = an.fit_power_tail(es, rescale=lambda n: n / np.log(n))
    detail.append(f"(k2 wins, e^k) slope of survival*n/log n {mixed.slope:.3f}")
    ok = abs(pure.slope + 1) <= 0.3 and abs(mixed.slope) <= 0.3
    ok = report_line("AC9", ok, "; ".join(detail) + " [assumes-condMonTime]",
                     time.perf_counter() - start, 180)
    assert ok


def test_ac10_sublinear_band(report_line):
    start = time.perf_counter()
    system = asy.UrnSystem(((parse_rate("poly:alpha=1,beta=1"), 1), (K2, 1)))
    res = urn.simulate_urn_embedded_batch(system, 1_000_000, SEED)
    es = an.empirical_survival(res["x_inf"][:, 0], res["winner"] != 0, "agent 0 loses")
    xs = np.arange(2, 31)
    lo, hi = asy.sublinear_band(system, 0).band(xs)
    S = es.at(xs)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = -np.log(S)
        se = np.sqrt(S * (1 - S) / es.n) / S
    inside = (S > 0) & (v >= lo - 3 * se) & (v <= hi + 3 * se)
    bad = xs[~inside].tolist()
    ok = report_line("AC10", bool(inside.all()),
                     f"{int(inside.sum())}/{len(xs)} points inside the band"
                     + (f", outside at {bad}" if bad else ""),
                     time.perf_counter() - start, 120)
    assert ok


def test_ac11_winners_count(report_line):
    start = time.perf_counter()
    counts = urn.winners_count(asy.UrnSystem.symmetric(K2, 100), 100_000, 100, SEED)
    mean = float(np.mean(counts))
    ok = report_line("AC11", 27 <= mean <= 33, f"mean winners {mean:.2f} in [27, 33]",
                     time.perf_counter() - start, 180)
    assert ok


def test_ac12_dirichlet_limit(report_line):
    start = time.perf_counter()
    shares = urn.dirichlet_shares_batch(1000, 1000, SEED)
    ks = an.ks_exponential(1000 * shares[:, 0])
    big = urn.dirichlet_shares_batch(10_000, 1000, SEED + 1)
    scaled_max = float(np.mean(big.max(axis=1) * 10_000 / math.log(10_000)))
    ok = ks < 0.05 and 0.85 <= scaled_max <= 1.15
    ok = report_line("AC12", ok, f"KS {ks:.4f} (< 0.05), mean scaled max {scaled_max:.3f}",
                     time.perf_counter() - start, 30)
    assert ok


def test_ac13_loser_correlation(report_line):
    start = time.perf_counter()
    res = urn.simulate_urn_embedded_batch(asy.UrnSystem.symmetric(K2, 3), 100_000, SEED)
    pairs = np.array([[v for v in row if v >= 0][:2] for row in res["x_inf"]])
    r, (lo, hi) = an.pearson_log_corr(pairs)
    ok = report_line("AC13", lo > 0, f"r = {r:.4f}, 95% CI ({lo:.4f}, {hi:.4f})",
                     time.perf_counter() - start, 120)
    assert ok


DETERMINISM_RUNS = [
    ("fig1-birth-tail", {"replicates": "3000", "times": "1"}),
    ("fig3-loser", {"replicates": "3000"}),
    ("winners-count", {"replicates": "6", "steps": "20000"}),
]


def _csv_bytes(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*.csv"))}


def test_ac14_determinism(report_line, tmp_path):
    start = time.perf_counter()
    details, ok = [], True
    for name, overrides in DETERMINISM_RUNS:
        outputs = []
        for workers in (1, 2, 3):
            out = tmp_path / f"{name}-{workers}"
            ex.run_experiment(ex.ExperimentConfig(name, overrides, str(out)), workers)
            outputs.append(_csv_bytes(out))
        same = bool(outputs[0]) and outputs[0] == outputs[1] == outputs[2]
        ok &= same
        details.append(f"{name}: {len(outputs[0])} CSV files "
                       + ("identical" if same else "DIFFER"))
    ok = report_line("AC14", ok, "; ".join(details) + " across workers 1, 2, 3",
                     time.perf_counter() - start)
    assert ok
