"""Command line interface.

Exit codes: 0 success, 1 domain or usage error, 2 numerical precision loss.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from . import density as dn
from . import experiments as ex
from .errors import BirthtailError, PrecisionLossError
from .io import atomic_write, fmt
from .rates import is_explosive, parse_rate
from .sim import batch, birth, urn

EXIT_OK, EXIT_USAGE, EXIT_PRECISION = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; usage errors are 1 here
        raise UsageError(f"{self.prog}: {message}")


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


def _t_values(args) -> np.ndarray:
    if args.grid:
        try:
            lo, hi, n = args.grid.split(":")
            return np.linspace(float(lo), float(hi), int(n))
        except ValueError:
            raise UsageError("--grid must be start:stop:count") from None
    if not args.t:
        raise UsageError("give --t (repeatable) or --grid")
    return np.asarray(sorted(args.t), dtype=float)


def _model(args) -> dn.ExplosionModel:
    return dn.ExplosionModel(parse_rate(args.rate), args.x0, args.truncation)


def _system(path: str) -> asy.UrnSystem:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read system file: {exc}") from None
    return asy.UrnSystem.parse(text)


def _quad(args) -> asy.QuadratureParams:
    return asy.QuadratureParams(step=args.step, s_max=args.s_max, truncation_N=args.truncation)


def _workers(args) -> int:
    return args.workers if args.workers is not None else batch.default_workers()


# ------------------------------------------------------------------ commands

def cmd_density(args) -> None:
    grid = dn.density_grid(_model(args), _t_values(args), "density", args.precision)
    _emit(args, grid.to_csv())


def cmd_survival(args) -> None:
    kind = "hazard" if args.hazard else "survival"
    grid = dn.density_grid(_model(args), _t_values(args), kind, args.precision)
    _emit(args, grid.to_csv())


def _prediction_output(pred: asy.TailPrediction, xs) -> str:
    out = json.loads(pred.to_json())
    if xs:
        if pred.kind == "band":
            lo, hi = pred.band(xs)
            out["values"] = [{"x": x, "lower": float(fmt(a)), "upper": float(fmt(b))}
                             for x, a, b in zip(xs, lo, hi)]
        else:
            out["values"] = [{"x": x, "survival": float(fmt(v))}
                             for x, v in zip(xs, pred.survival(xs))]
    if out.get("constant") is not None:
        out["constant"] = float(fmt(out["constant"]))
    return json.dumps(out) + "\n"


def cmd_predict_tail(args) -> None:
    if args.system:
        system = _system(args.system)
        F = system.agent(args.agent)[0]
        pred = (asy.loser_tail(system, args.agent, quad=_quad(args)) if is_explosive(F)
                else asy.sublinear_band(system, args.agent))
    else:
        if not args.rate or args.t is None:
            raise UsageError("give --rate and --t, or --system and --agent")
        pred = asy.birth_tail_prediction(_model(args), args.t)
    _emit(args, _prediction_output(pred, args.x))


def cmd_quasi_limit(args) -> None:
    _emit(args, fmt(asy.quasi_limit_tail(parse_rate(args.rate), args.x0, args.x)) + "\n")


def cmd_simulate_birth(args) -> None:
    F = parse_rate(args.rate)
    res = birth.simulate_birth_batch(F, args.x0, args.t, args.replicates, args.seed,
                                     args.max_jumps, _workers(args))
    lines = ["replicate,state,exploded,jumps,stop_reason"]
    for r, s, e, j, why in zip(res["replicate"], res["state"], res["exploded"], res["jumps"],
                               res["reason"]):
        state = "exploded" if s < 0 else str(int(s))
        lines.append(f"{r},{state},{fmt(bool(e))},{j},{birth.STOP_REASONS[int(why)]}")
    _emit(args, "\n".join(lines) + "\n")


def cmd_simulate_urn(args) -> None:
    system = _system(args.system)
    if args.discrete:
        res = urn.simulate_urn_discrete_batch(system, args.replicates, args.seed, args.max_steps,
                                              args.share_threshold, _workers(args))
        A = res["counts"].shape[1]
        lines = [",".join(["replicate", "steps", "stop_reason"]
                          + [f"x_{i + 1}" for i in range(A)])]
        for r, n, hit, row in zip(res["replicate"], res["steps"], res["on_share"], res["counts"]):
            why = "share_threshold" if hit else "max_steps"
            lines.append(",".join([str(r), str(n), why] + [str(int(v)) for v in row]))
        _emit(args, "\n".join(lines) + "\n")
        return
    res = urn.simulate_urn_embedded_batch(system, args.replicates, args.seed, args.eps,
                                          _workers(args), args.max_jumps)
    _emit(args, urn.urn_csv(res))


def cmd_c_constant(args) -> None:
    if args.system:
        system = _system(args.system)
    elif args.rate and args.agents:
        system = asy.UrnSystem.symmetric(parse_rate(args.rate), args.agents, args.x0)
    else:
        raise UsageError("give --rate and --agents, or --system")
    _emit(args, fmt(asy.correlation_constant(system, args.a, _quad(args), args.method)) + "\n")


def cmd_montime(args) -> None:
    system = _system(args.system)
    pred = asy.monopoly_tail(system, args.winner, ef_loser=args.ef_loser)
    _emit(args, _prediction_output(pred, args.x))


def cmd_experiment(args) -> None:
    if args.action == "list":
        lines = [f"{name}\t{ex.REGISTRY[name].description}" for name in ex.list_experiments()]
        sys.stdout.write("\n".join(lines) + "\n")
        return
    if not args.name:
        raise UsageError("experiment run needs a name")
    overrides = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        overrides.update(ex.parse_config(text).get(args.name, {}))
    for item in args.set or []:
        key, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key = key.removeprefix(args.name + ".")
        overrides[key] = value
    report = ex.run_experiment(ex.ExperimentConfig(args.name, overrides, args.output_dir),
                               _workers(args))
    for m in report.metrics:
        sys.stdout.write(f"{m.verdict.upper():8s} {m.metric} = {fmt(m.value)} "
                         f"(target {json.dumps(ex._num(m.target))}"
                         f"{'' if m.tolerance is None else f' +- {fmt(m.tolerance)}'})\n")


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="birthtail", description="Explosive birth processes and non-linear urns.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def rate_opts(sp, required=True):
        sp.add_argument("--rate", required=required,
                        help="rate spec, e.g. poly:alpha=1,beta=2 or exp:beta=1")
        sp.add_argument("--x0", type=int, default=1, help="initial state (default 1)")

    def trunc_opt(sp):
        sp.add_argument("--truncation", type=int, default=100,
                        help="number of sojourns kept in the explosion-time series (default 100)")

    def out_opt(sp):
        sp.add_argument("--out", help="write to this file (atomically) instead of stdout")

    def time_opts(sp):
        sp.add_argument("--t", type=float, action="append", help="time point (repeatable)")
        sp.add_argument("--grid", help="time grid start:stop:count")
        sp.add_argument("--precision", choices=("extended", "strict"), default="extended",
                        help="strict raises on cancellation instead of switching algorithms")

    def quad_opts(sp):
        sp.add_argument("--step", type=float, default=1e-4, help="quadrature step (default 1e-4)")
        sp.add_argument("--s-max", type=float, default=50.0,
                        help="initial quadrature horizon (default 50, extended as needed)")

    def sim_opts(sp):
        sp.add_argument("--replicates", type=int, required=True, help="number of replicates")
        sp.add_argument("--seed", type=int, required=True, help="master seed (required)")
        sp.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: $BIRTHTAIL_WORKERS or 1)")
        sp.add_argument("--max-jumps", type=int, default=None,
                        help="sojourn cap per process (default 1e6, or 100 for exp feedback)")

    sp = sub.add_parser("density", help="explosion-time density on a time grid")
    rate_opts(sp), trunc_opt(sp), time_opts(sp), out_opt(sp)
    sp.set_defaults(func=cmd_density)

    sp = sub.add_parser("survival", help="explosion-time survival P(T > t)")
    rate_opts(sp), trunc_opt(sp), time_opts(sp), out_opt(sp)
    sp.add_argument("--hazard", action="store_true", help="print g(t)/P(T>t) instead")
    sp.set_defaults(func=cmd_survival)

    sp = sub.add_parser("predict-tail", help="predicted tail law as JSON")
    rate_opts(sp, required=False), trunc_opt(sp), quad_opts(sp), out_opt(sp)
    sp.add_argument("--t", type=float, help="observation time for the birth-process tail")
    sp.add_argument("--system", help="system file with agent=<rate>@<x0> lines")
    sp.add_argument("--agent", type=int, default=0, help="0-based loser index (default 0)")
    sp.add_argument("--x", type=int, action="append", help="evaluate the tail at x (repeatable)")
    sp.set_defaults(func=cmd_predict_tail)

    sp = sub.add_parser("quasi-limit", help="lim P(Xi(t) > x | T > t)")
    rate_opts(sp), out_opt(sp)
    sp.add_argument("--x", type=int, required=True, help="threshold state")
    sp.set_defaults(func=cmd_quasi_limit)

    sp = sub.add_parser("simulate-birth", help="birth-process states at time t (CSV)")
    rate_opts(sp), sim_opts(sp), out_opt(sp)
    sp.add_argument("--t", type=float, required=True, help="observation time")
    sp.set_defaults(func=cmd_simulate_birth)

    sp = sub.add_parser("simulate-urn", help="urn outcomes via the embedding (CSV)")
    sim_opts(sp), out_opt(sp)
    sp.add_argument("--system", required=True, help="system file with agent=<rate>@<x0> lines")
    sp.add_argument("--eps", type=float, default=1e-12,
                    help="guard probability for explosion-time intervals (default 1e-12)")
    sp.add_argument("--discrete", action="store_true", help="step the urn instead")
    sp.add_argument("--max-steps", type=int, default=10 ** 6, help="discrete step cap")
    sp.add_argument("--share-threshold", type=float, default=None,
                    help="discrete: stop once a share exceeds this")
    sp.set_defaults(func=cmd_simulate_urn)

    sp = sub.add_parser("c-constant", help="loser tail-dependence constant c(A, a)")
    rate_opts(sp, required=False), trunc_opt(sp), quad_opts(sp), out_opt(sp)
    sp.add_argument("--agents", type=int, help="system size A for a symmetric system")
    sp.add_argument("--system", help="system file instead of --rate/--agents")
    sp.add_argument("--a", type=int, required=True, help="number of losers a")
    sp.add_argument("--method", choices=("auto", "general", "symmetric"), default="auto",
                    help="integral form; auto picks symmetric for identical agents")
    sp.set_defaults(func=cmd_c_constant)

    sp = sub.add_parser("montime", help="monopoly-time tail prediction as JSON")
    out_opt(sp)
    sp.add_argument("--system", required=True, help="system file")
    sp.add_argument("--winner", type=int, default=0, help="0-based winner index")
    sp.add_argument("--ef-loser", type=float, default=None,
                    help="E F_loser(X_loser) for sub-linear losers, if known")
    sp.add_argument("--x", type=int, action="append", help="evaluate the shape at n (repeatable)")
    sp.set_defaults(func=cmd_montime)

    sp = sub.add_parser("experiment", help="list or run named reproductions")
    sp.add_argument("action", choices=("list", "run"))
    sp.add_argument("name", nargs="?", help="experiment name for run")
    sp.add_argument("--config", help="config file with <experiment>.<key>=value lines")
    sp.add_argument("--set", action="append", help="override key=value (repeatable)")
    sp.add_argument("--output-dir", default=".", help="directory for reports and CSV files")
    sp.add_argument("--workers", type=int, default=None,
                    help="worker threads (default: $BIRTHTAIL_WORKERS or 1)")
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("missing command; see --help")
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PrecisionLossError as exc:
        print(f"precision error: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except BirthtailError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
