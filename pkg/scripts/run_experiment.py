"""Run one named experiment and print its metric verdicts.

    python3 scripts/run_experiment.py fig1-birth-tail --set replicates=2000 --output-dir out
"""

from __future__ import annotations

import argparse
import sys

from birthtail import experiments as ex
from birthtail.io import fmt
from birthtail.sim.batch import default_workers


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("name", choices=ex.list_experiments())
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="parameter override (repeatable)")
    p.add_argument("--output-dir", default="results", help="directory for reports and CSV")
    p.add_argument("--workers", type=int, default=None, help="worker threads")
    args = p.parse_args(argv)
    overrides = dict(item.split("=", 1) for item in args.set)
    cfg = ex.ExperimentConfig(args.name, overrides, args.output_dir)
    report = ex.run_experiment(cfg, args.workers or default_workers())
    for m in report.metrics:
        print(f"{m.verdict:8s} {m.metric} = {fmt(m.value)}  target {m.target}  [{m.provenance}]")
    return 0 if all(m.verdict != "fail" for m in report.metrics) else 1


if __name__ == "__main__":
    sys.exit(main())
