"""Run every registered experiment at its default size and summarize the verdicts.

    python3 scripts/run_all.py --output-dir results
"""

from __future__ import annotations

import argparse
import sys
import time
from collections import Counter

from birthtail import experiments as ex
from birthtail.sim.batch import default_workers


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--output-dir", default="results", help="directory for reports and CSV")
    p.add_argument("--workers", type=int, default=None, help="worker threads")
    p.add_argument("--only", action="append", default=[], help="restrict to these experiments")
    args = p.parse_args(argv)
    totals = Counter()
    for name in args.only or ex.list_experiments():
        start = time.perf_counter()
        report = ex.run_experiment(ex.ExperimentConfig(name, {}, args.output_dir),
                                   args.workers or default_workers())
        verdicts = Counter(m.verdict for m in report.metrics)
        totals.update(verdicts)
        summary = ", ".join(f"{k} {v}" for k, v in sorted(verdicts.items()))
        print(f"{name:22s} {summary}  ({time.perf_counter() - start:.1f}s)", flush=True)
    print("total: " + ", ".join(f"{k} {v}" for k, v in sorted(totals.items())))
    return 0 if totals["fail"] == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
