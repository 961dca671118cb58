"""Named, config-driven reproductions with predicted-vs-empirical reports.

Each experiment writes ``<name>.report.jsonl`` (one run record, then one line
per metric) and plot-ready ``<name>.<curve>.csv`` files into the output
directory.  Every metric carries a target, a tolerance, a provenance
(``paper`` or ``derived``) and a verdict in {pass, fail, flagged}; flagged
means the metric could not be judged, e.g. because the sample was too small.
"""

from __future__ import annotations

import json
import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analytics as an
from . import asymptotics as asy
from . import density as dn
from .errors import (DegenerateSampleError, DomainError, EmptySampleError, InsufficientDataError,
                     RegistryError)
from .io import atomic_write, fmt
from .rates import evaluate, format_rate, is_explosive, parse_rate
from .sim import birth, urn

DEFAULT_SEED = 20240101
MIN_STAT_SAMPLES = 100  # statistical metrics on fewer samples are flagged
UNIVERSAL_KEYS = {"seed": DEFAULT_SEED, "replicates": None}


# ------------------------------------------------------------------ records

@dataclass(frozen=True)
class Metric:
    metric: str
    value: float
    target: object  # number, or [lo, hi] interval
    tolerance: float | None
    verdict: str
    provenance: str
    flags: tuple[str, ...] = ()
    note: str = ""

    def to_dict(self) -> dict:
        return {"metric": self.metric, "value": _num(self.value), "target": _num(self.target),
                "tolerance": self.tolerance, "verdict": self.verdict,
                "provenance": self.provenance, "flags": list(self.flags), "note": self.note}


def _num(v):
    if isinstance(v, (list, tuple)):
        return [_num(x) for x in v]
    if isinstance(v, (bool, str)) or v is None:
        return v
    v = float(v)
    return None if math.isnan(v) else float(fmt(v)) if math.isfinite(v) else fmt(v)


def judge(metric: str, value: float, target, tolerance: float | None, provenance: str,
          flags=(), note: str = "", n: int | None = None) -> Metric:
    """Compare value with a point target (+- tolerance) or an interval target [lo, hi]."""
    if (n is not None and n < MIN_STAT_SAMPLES) or value is None or not np.isfinite(value):
        why = "insufficient data" if n is not None and n < MIN_STAT_SAMPLES else "not computable"
        return Metric(metric, float("nan") if value is None else value, target, tolerance,
                      "flagged", provenance, tuple(flags) + ("insufficient-data",),
                      (note + "; " if note else "") + why)
    if isinstance(target, (list, tuple)):
        lo, hi = target
        ok = lo <= value <= hi
    else:
        ok = abs(value - target) <= tolerance
    return Metric(metric, float(value), target, tolerance, "pass" if ok else "fail", provenance,
                  tuple(flags), note)


def flagged(metric: str, target, tolerance, provenance: str, reason: str, flags=()) -> Metric:
    return Metric(metric, float("nan"), target, tolerance, "flagged", provenance,
                  tuple(flags) + ("insufficient-data",), reason)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    overrides: dict = field(default_factory=dict)
    output_dir: str = "."


@dataclass
class ExperimentReport:
    name: str
    parameters: dict
    metrics: list
    artifacts: list
    wall_time: float

    def to_jsonl(self) -> str:
        head = {"type": "run", "name": self.name,
                "parameters": {k: _plain(v) for k, v in self.parameters.items()},
                "artifacts": self.artifacts, "wall_time": round(self.wall_time, 3)}
        lines = [json.dumps(head)]
        lines += [json.dumps({"type": "metric", **m.to_dict()}) for m in self.metrics]
        return "\n".join(lines) + "\n"

    @property
    def passed(self) -> bool:
        return all(m.verdict == "pass" for m in self.metrics)


def _plain(v):
    return v if isinstance(v, (int, float, str, bool)) or v is None else str(v)


# ------------------------------------------------------------------ helpers

def _label(spec: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "-", spec).strip("-")


def _split(value: str, sep: str = ";") -> list[str]:
    return [p.strip() for p in str(value).split(sep) if p.strip()]


def _ints(value) -> list[int]:
    return [int(float(v)) for v in _split(value, ",")]


def _floats(value) -> list[float]:
    return [float(v) for v in _split(value, ",")]


def parse_systems(value: str) -> list[asy.UrnSystem]:
    """Systems separated by ';', agents by '|', each agent ``<rate-spec>@<x0>``."""
    out = []
    for part in _split(value):
        lines = "".join(f"agent={a.strip()}\n" for a in part.split("|"))
        out.append(asy.UrnSystem.parse(lines))
    return out


def _system_label(system: asy.UrnSystem) -> str:
    return "_".join(_label(f"{format_rate(F)}@{x}") for F, x in system.expanded())


class _Run:
    """Collects metrics and artifacts for one experiment run."""

    def __init__(self, name: str, out: Path):
        self.name, self.out = name, out
        self.metrics: list[Metric] = []
        self.artifacts: list[str] = []

    def add(self, m: Metric) -> None:
        self.metrics.append(m)

    def csv(self, curve: str, text: str) -> None:
        path = atomic_write(self.out / f"{self.name}.{curve}.csv", text)
        self.artifacts.append(path.name)

    def table(self, curve: str, header: list[str], rows) -> None:
        lines = [",".join(header)]
        lines += [",".join(fmt(v) if not isinstance(v, str) else v for v in row) for row in rows]
        self.csv(curve, "\n".join(lines) + "\n")

    def safe(self, metric: str, target, tol, prov: str, fn, flags=()) -> None:
        """Add fn()'s metric, or a flagged one when the data cannot support it."""
        try:
            self.add(fn())
        except (InsufficientDataError, EmptySampleError, DegenerateSampleError) as exc:
            self.add(flagged(metric, target, tol, prov, str(exc), flags))


# ------------------------------------------------------------------ experiments

FIG1_TARGETS = {("poly:alpha=1,beta=2", 0.3): 0.0010, ("poly:alpha=1,beta=2", 1.0): 0.3112,
                ("poly:alpha=1,beta=2", 3.0): 0.9088, ("exp:beta=1", 0.3): 0.0030,
                ("exp:beta=1", 1.0): 0.3424, ("exp:beta=1", 3.0): 0.8974}


def _fig1(p: dict, run: _Run, workers: int) -> None:
    lo_x, hi_x = _floats(p["x_range"])
    for spec in _split(p["rates"]):
        F = parse_rate(spec)
        key = format_rate(F)
        model = dn.ExplosionModel(F, int(p["x0"]))
        for t in _floats(p["times"]):
            res = birth.simulate_birth_batch(F, int(p["x0"]), t, int(p["replicates"]),
                                             int(p["seed"]), workers=workers)
            n = len(res["state"])
            frac = float(np.mean(res["exploded"]))
            tgt = FIG1_TARGETS.get((key, t))
            if tgt is not None:
                run.add(judge(f"exploded_fraction[{key},t={t:g}]", frac, tgt, 0.015, "paper", n=n))
            else:
                exact = float(dn.explosion_cdf(model, t))
                tol = 3 * math.sqrt(max(exact * (1 - exact), 1e-12) / n) + model.bias_bound
                run.add(judge(f"exploded_fraction[{key},t={t:g}]", frac, exact, tol, "derived", n=n))
            alive = res["state"] >= 0
            if not alive.any():
                run.add(flagged(f"tail_ratio[{key},t={t:g}]", [0.8, 1.25], None, "derived",
                                "every replicate exploded"))
                continue
            es = an.empirical_survival(res["state"], alive, f"T > {t:g}")
            curve = f"{_label(key)}-t{t:g}"
            run.csv(curve, es.to_csv())
            xs = es.support[es.support >= int(p["x0"])]
            pred = [asy.birth_tail(model, t, int(x)) for x in xs]
            run.table(curve + "-predicted", ["value", "predicted"], zip(xs, pred))
            # ratio over the range where at least 10 survivors exceed x
            x_in = np.arange(int(lo_x), int(hi_x) + 1)
            exceed = es.at(x_in) * es.n
            x_in = x_in[exceed >= 10]
            if len(x_in) == 0:
                run.add(flagged(f"tail_ratio[{key},t={t:g}]", [0.8, 1.25], None, "derived",
                                "fewer than 10 survivors in the x range"))
                continue
            ratio = es.at(x_in) / np.array([asy.birth_tail(model, t, int(x)) for x in x_in])
            worst = float(ratio[np.argmax(np.abs(np.log(ratio)))])
            run.add(judge(f"tail_ratio[{key},t={t:g}]", worst, [0.8, 1.25], None, "derived",
                          note=f"x in [{x_in[0]}, {x_in[-1]}]", n=es.n))


def _fig2(p: dict, run: _Run, workers: int) -> None:
    ts = np.linspace(float(p["t_min"]), float(p["t_max"]), int(p["points"]))
    for spec in _split(p["rates"]):
        F = parse_rate(spec)
        model = dn.ExplosionModel(F, int(p["x0"]), int(p["truncation_N"]))
        g = dn.explosion_density(model, ts)
        h = np.array([dn.hazard_prefactor(model, float(t)) for t in ts])
        run.table(_label(format_rate(F)), ["t", "hazard", "density"], zip(ts, h, g))
        limit = float(evaluate(F, int(p["x0"])))
        late = dn.hazard_prefactor(model, float(p["t_limit"]))
        run.add(judge(f"hazard_limit_rel_error[{format_rate(F)}]", abs(late - limit) / limit,
                      0.0, 0.01, "paper", note=f"t={float(p['t_limit']):g}"))


def _fig3(p: dict, run: _Run, workers: int) -> None:
    loser = int(p["loser"])
    for system in parse_systems(p["systems"]):
        label = _system_label(system)
        res = urn.simulate_urn_embedded_batch(system, int(p["replicates"]), int(p["seed"]),
                                              workers=workers)
        run.csv(label + "-outcomes", urn.urn_csv(res))
        lost = res["winner"] != loser
        F = system.agent(loser)[0]
        pred = asy.loser_tail(system, loser)
        n = int(lost.sum())
        name = f"loser_slope[{label}]"

        def slope_metric():
            es = an.empirical_survival(res["x_inf"][:, loser], lost, f"agent {loser} loses")
            run.csv(label + "-loser", es.to_csv())
            fit = an.fit_power_tail(es)
            return judge(name, fit.slope, pred.exponent, float(p["slope_tolerance"]), "paper",
                         note=f"stderr {fit.stderr:.3g}", n=n)
        run.safe(name, pred.exponent, float(p["slope_tolerance"]), "paper", slope_metric)

        cname = f"loser_constant_ratio[{label}]"

        def const_metric():
            es = an.empirical_survival(res["x_inf"][:, loser], lost, f"agent {loser} loses")
            x, s = an._fit_points(es, an.DEFAULT_FIT_RANGE, "loglog")
            if len(x) < an.MIN_FIT_POINTS:
                raise InsufficientDataError("too few points for the constant check")
            ratio = s / pred.survival(x)
            xs = x.astype(int)
            run.table(label + "-loser-predicted", ["value", "predicted"],
                      zip(xs, pred.survival(xs)))
            return judge(cname, float(np.median(ratio)), 1.0, float(p["constant_tolerance"]),
                         "derived", note="median over the fit range", n=n)
        run.safe(cname, 1.0, float(p["constant_tolerance"]), "derived", const_metric)


def _fig5(p: dict, run: _Run, workers: int) -> None:
    lo_x, hi_x = _ints(p["x_range"])
    for system in parse_systems(p["systems"]):
        label = _system_label(system)
        res = urn.simulate_urn_embedded_batch(system, int(p["replicates"]), int(p["seed"]),
                                              workers=workers)
        es = an.empirical_survival(res["x_inf"][:, 0], res["winner"] != 0, "agent 0 loses")
        run.csv(label + "-loser", es.to_csv())
        nm = an.empirical_survival(res["n_mon"], res["winner"] != 0, "agent 0 loses")
        run.csv(label + "-montime", nm.to_csv())
        band = asy.sublinear_band(system, 0)
        xs = np.arange(lo_x, hi_x + 1)
        xs = xs[xs >= system.agent(0)[1]]
        lo, hi = band.band(xs)
        run.table(label + "-band", ["value", "lower", "upper"], zip(xs, lo, hi))
        S = es.at(xs)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = -np.log(S)
            se = np.sqrt(S * (1 - S) / es.n) / S
        inside = (S > 0) & (v >= lo - 3 * se) & (v <= hi + 3 * se)
        run.add(judge(f"band_coverage[{label}]", float(inside.mean()), 1.0, 0.0, "derived",
                      note=f"x in [{lo_x}, {hi_x}], 3 binomial standard errors", n=es.n))


TABLE_C = {"poly:alpha=1,beta=2": [1.121, 1.227, 1.427, 1.565, 1.754],
           "exp:beta=1": [1.130, 1.218, 1.374, 1.480, 1.634],
           "polylog:beta=2": [1.141, 1.254, 1.460, 1.597, 1.779]}
TABLE_C_AGENTS = [3, 10, 100, 1000, 10 ** 6]


def _quad(p: dict) -> asy.QuadratureParams:
    return asy.QuadratureParams(step=float(p["step"]), s_max=float(p["s_max"]),
                                truncation_N=int(p["truncation_N"]))


def _table_c(p: dict, run: _Run, workers: int) -> None:
    quad = _quad(p)
    rows = []
    for spec in _split(p["rates"]):
        F = parse_rate(spec)
        key = format_rate(F)
        for A in _ints(p["agents"]):
            c = asy.correlation_constant(asy.UrnSystem.symmetric(F, A), 2, quad)
            rows.append((key.replace(",", ";"), A, c))
            if key in TABLE_C and A in TABLE_C_AGENTS:
                run.add(judge(f"c[{key},A={A},a=2]", c, TABLE_C[key][TABLE_C_AGENTS.index(A)],
                              0.01, "paper"))
            else:
                run.add(judge(f"c_exceeds_one[{key},A={A},a=2]", c, [1.0, math.inf], None,
                              "derived"))
    run.table("table", ["rate", "agents", "c"], rows)
    # loser log-correlation by simulation
    reps = int(p["replicates"])
    A = int(p["corr_agents"])
    F = parse_rate(p["corr_rate"])
    res = urn.simulate_urn_embedded_batch(asy.UrnSystem.symmetric(F, A), reps, int(p["seed"]),
                                          workers=workers)
    X = res["x_inf"]
    # any two losers are exchangeable: take the first two non-winners of every replicate
    pairs = np.array([[v for v in row if v >= 0][:2] for row in X])
    run.table("corr-pairs", ["replicate", "x_a", "x_b"],
              zip(res["replicate"], pairs[:, 0], pairs[:, 1]))
    name = f"loser_log_corr_lower95[A={A}]"

    def corr_metric():
        r, (lo, hi) = an.pearson_log_corr(pairs)
        return judge(name, lo, [0.0, 1.0], None, "paper",
                     note=f"r={r:.4f}, 95% CI ({lo:.4f}, {hi:.4f}); reported +0.020", n=len(pairs))
    run.safe(name, [0.0, 1.0], None, "paper", corr_metric)


TABLE_RATIO = {(1000, 3): 2.04, (1000, 10): 4.37, (1000, 20): 6.45, (1000, 30): 8.25,
               (10 ** 6, 3): 2.45, (10 ** 6, 10): 6.65, (10 ** 6, 20): 11.78, (10 ** 6, 30): 16.42,
               (10 ** 9, 3): 2.61, (10 ** 9, 10): 7.63, (10 ** 9, 20): 14.14, (10 ** 9, 30): 20.27}


def _table_ratio(p: dict, run: _Run, workers: int) -> None:
    quad = _quad(p)
    F = parse_rate(p["rate"])
    rows = []
    for A in _ints(p["agents"]):
        system = asy.UrnSystem.symmetric(F, A)
        for a in _ints(p["a_values"]):
            c_hi = asy.correlation_constant(system, a, quad)
            c_lo = asy.correlation_constant(system, a - 1, quad)
            ratio = c_hi / c_lo
            rows.append((A, a, ratio))
            tgt = TABLE_RATIO.get((A, a)) if format_rate(F) == "poly:alpha=1,beta=2" else None
            if tgt is not None:
                run.add(judge(f"c_ratio[A={A},a={a}]", ratio, tgt, float(p["tolerance"]), "paper"))
            else:
                run.add(judge(f"c_ratio_exceeds_one[A={A},a={a}]", ratio, [1.0, math.inf], None,
                              "derived"))
    c2 = asy.correlation_constant(asy.UrnSystem.symmetric(F, 10 ** 6), 2, quad)
    run.add(judge("c[A=1e6,a=2]_below_2", c2, [1.7, 2.0], None, "paper",
                  note="direction of the factorial limit"))
    run.table("table", ["agents", "a", "ratio"], rows)


def _winners(p: dict, run: _Run, workers: int) -> None:
    F = parse_rate(p["rate"])
    A = int(p["agents"])
    counts = urn.winners_count(asy.UrnSystem.symmetric(F, A, int(p["x0"])), int(p["steps"]),
                               int(p["replicates"]), int(p["seed"]), workers)
    run.table("counts", ["replicate", "winners"], enumerate(counts))
    target = [27.0, 33.0] if (A, int(p["steps"])) == (100, 10 ** 5) else [1.0, float(A)]
    prov = "paper" if target == [27.0, 33.0] else "derived"
    n = len(counts)
    run.add(judge(f"mean_winners[A={A}]", float(np.mean(counts)), target, None, prov,
                  note="reported 30.14", n=n))


def _dirichlet(p: dict, run: _Run, workers: int) -> None:
    A = int(p["agents_ks"])
    n = int(p["replicates"])
    shares = urn.dirichlet_shares_batch(A, n, int(p["seed"]), workers)
    scaled = A * shares[:, 0]
    run.table("scaled-share", ["replicate", "scaled_share"], enumerate(scaled))
    name = f"ks_exponential[A={A}]"
    run.safe(name, [0.0, 0.05], None, "paper",
             lambda: judge(name, an.ks_exponential(scaled), [0.0, 0.05], None, "paper", n=n))
    A2 = int(p["agents_max"])
    shares = urn.dirichlet_shares_batch(A2, n, int(p["seed"]) + 1, workers)
    m = shares.max(axis=1) * A2 / math.log(A2)
    run.table("scaled-max", ["replicate", "scaled_max"], enumerate(m))
    run.add(judge(f"mean_scaled_max[A={A2}]", float(m.mean()), [0.85, 1.15], None, "paper", n=n))


def _montime(p: dict, run: _Run, workers: int) -> None:
    tol = float(p["slope_tolerance"])
    for system in parse_systems(p["systems"]):
        label = _system_label(system)
        res = urn.simulate_urn_embedded_batch(system, int(p["replicates"]), int(p["seed"]),
                                              workers=workers)
        won = res["winner"] == 0
        pred = asy.monopoly_tail(system, 0)
        flags = pred.flags
        name = f"montime_slope[{label}]"
        log_factor = "log-factor" in pred.flags

        def metric():
            es = an.empirical_survival(res["n_mon"], won, "agent 0 wins")
            run.csv(label + "-montime", es.to_csv())
            if log_factor:
                # survival * n^(-exponent) / log n should be flat
                with np.errstate(divide="ignore"):  # n = 1 has log n = 0; the fit drops it
                    fit = an.fit_power_tail(es, rescale=lambda x: x ** (-pred.exponent) / np.log(x))
                return judge(f"montime_residual_slope[{label}]", fit.slope, 0.0, tol, "paper",
                             flags, note="slope of survival * n / log n", n=int(won.sum()))
            fit = an.fit_power_tail(es)
            return judge(name, fit.slope, pred.exponent, tol, "paper", flags,
                         note=f"stderr {fit.stderr:.3g}", n=int(won.sum()))
        run.safe(name, 0.0 if log_factor else pred.exponent, tol, "paper", metric, flags)
    # exponent phase grid: pure prediction
    rows = []
    for b1 in _floats(p["grid_winner_betas"]):
        for b2 in _floats(p["grid_loser_betas"]):
            sys2 = asy.UrnSystem(((parse_rate(f"poly:alpha=1,beta={b1}"), 1),
                                  (parse_rate(f"poly:alpha=1,beta={b2}"), 1)))
            loser_exp = 1.0 - b2 if b2 > 1 else -math.inf
            try:
                mon = asy.monopoly_tail(sys2, 0).exponent
            except DomainError:
                mon = math.nan
            rows.append((b1, b2, loser_exp, mon))
    run.table("phase-grid", ["beta_winner", "beta_loser", "loser_exponent", "montime_exponent"],
              rows)


def _conjecture(p: dict, run: _Run, workers: int) -> None:
    quad = _quad(p)
    F = parse_rate(p["rate"])
    agents = _ints(p["agents"])
    rows = []
    for a in _ints(p["a_values"]):
        seq = []
        for A in agents:
            c = asy.correlation_constant(asy.UrnSystem.symmetric(F, A), a, quad)
            seq.append(c / math.factorial(a))
            rows.append((A, a, c, seq[-1]))
        increasing = all(y > x for x, y in zip(seq, seq[1:]))
        value = seq[-1] if increasing else -seq[-1]
        run.add(judge(f"c_over_factorial[a={a},A={agents[-1]}]", value,
                      [0.0, 1.0 + float(p["overshoot"])], None, "paper",
                      note="positive when increasing in A; limit 1 conjectured"))
    run.table("scan", ["agents", "a", "c", "c_over_factorial"], rows)


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    defaults: dict
    runner: object = field(repr=False)


_QUAD = {"step": 1e-4, "s_max": 50.0, "truncation_N": 100}
K2 = "poly:alpha=1,beta=2"

REGISTRY = {e.name: e for e in [
    Experiment("fig1-birth-tail", "explosion fractions and the conditional tail of the state",
               {"rates": f"{K2};exp:beta=1", "times": "0.3,1,3", "x0": 1, "replicates": 10000,
                "x_range": "10,40"}, _fig1),
    Experiment("fig2-pareto-factor", "hazard prefactor and density of the explosion time",
               {"rates": f"{K2};exp:beta=1;polylog:beta=2", "x0": 1, "truncation_N": 100,
                "t_min": 0.01, "t_max": 3.0, "points": 300, "t_limit": 50.0}, _fig2),
    Experiment("fig3-loser", "loser wealth tails in two-agent super-linear systems",
               {"systems": f"{K2}@1|poly:alpha=1,beta=3@1;{K2}@1|exp:beta=1@1", "loser": 0,
                "replicates": 10000, "slope_tolerance": 0.15, "constant_tolerance": 0.25},
               _fig3),
    Experiment("fig5-loser-sublin", "sub-linear loser against a super-linear winner",
               {"systems": f"poly:alpha=1,beta=1@1|{K2}@1;poly:alpha=1,beta=0.5@1|{K2}@1;"
                           f"poly:alpha=1,beta=1@3|{K2}@1",
                "replicates": 100000, "x_range": "2,30"}, _fig5),
    Experiment("table-c-constants", "c(A, 2) table and the sign of the loser correlation",
               {"rates": f"{K2};exp:beta=1;polylog:beta=2", "agents": "3,10,100,1000,1000000",
                **_QUAD, "replicates": 100000, "corr_agents": 3, "corr_rate": K2}, _table_c),
    Experiment("table-c-ratio", "c(A, a) / c(A, a - 1) table",
               {"rate": K2, "agents": "1000,1000000,1000000000", "a_values": "3,10,20,30",
                "tolerance": 0.01, **_QUAD}, _table_ratio),
    Experiment("winners-count", "agents winning at least one step",
               {"rate": K2, "agents": 100, "x0": 1, "steps": 100000, "replicates": 100},
               _winners),
    Experiment("dirichlet-limit", "share limits of the linear urn with many agents",
               {"agents_ks": 1000, "agents_max": 10000, "replicates": 1000}, _dirichlet),
    Experiment("montime-exponents", "monopoly-time tails and the exponent phase grid",
               {"systems": f"poly:alpha=1,beta=3@1|{K2}@1;{K2}@1|exp:beta=1@1",
                "replicates": 10000, "slope_tolerance": 0.3,
                "grid_winner_betas": "2.5,3,4", "grid_loser_betas": "0.5,1.5,2,2.5,3,4"},
               _montime),
    Experiment("c-conjecture-scan", "growth of c(A, a) towards a!",
               {"rate": K2, "agents": "1000,1000000,1000000000", "a_values": "2,3,5",
                "overshoot": 0.05, **_QUAD}, _conjecture),
]}


def list_experiments() -> list[str]:
    return sorted(REGISTRY)


def parse_config(text: str) -> dict[str, dict[str, str]]:
    """``<experiment>.<key>=value`` lines with '#' comments, grouped by experiment."""
    out: dict[str, dict[str, str]] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        name, dot, sub = key.strip().rpartition(".")
        if not eq or not dot or not name or not sub:
            raise RegistryError(f"expected <experiment>.<key>=value, got {line!r}")
        out.setdefault(name, {})[sub] = value.strip()
    return out


def _coerce(default, value):
    if isinstance(value, str) and isinstance(default, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(value, str) and isinstance(default, int):
        return int(float(value))
    if isinstance(value, str) and isinstance(default, float):
        return float(value)
    return value


def resolve_parameters(config: ExperimentConfig) -> dict:
    if config.name not in REGISTRY:
        raise RegistryError(f"unknown experiment {config.name!r}; known: {', '.join(list_experiments())}")
    exp = REGISTRY[config.name]
    params = {**UNIVERSAL_KEYS, **exp.defaults}
    for k, v in config.overrides.items():
        if k not in params:
            raise RegistryError(f"{config.name} has no parameter {k!r}; "
                                f"known: {', '.join(sorted(params))}")
        default = params[k]
        try:
            params[k] = _coerce(default, v) if default is not None else int(float(v))
        except ValueError:
            raise RegistryError(f"bad value for {config.name}.{k}: {v!r}") from None
    if params["replicates"] is None:
        params["replicates"] = 0
    return params


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Run one registered experiment and write its report and curves."""
    params = resolve_parameters(config)
    out = Path(config.output_dir)
    run = _Run(config.name, out)
    t0 = time.perf_counter()
    try:
        REGISTRY[config.name].runner(params, run, workers)
    except Exception as exc:
        exc.args = (f"[{config.name}] {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise
    report = ExperimentReport(config.name, params, run.metrics, run.artifacts,
                              time.perf_counter() - t0)
    atomic_write(out / f"{config.name}.report.jsonl", report.to_jsonl())
    return report
