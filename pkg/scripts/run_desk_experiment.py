"""Desk-scale comparison: 50 replications, 2000 samples, 12 tasks, 3 workers.

Usage: python3 scripts/run_desk_experiment.py [OUT_DIR] [--backend highs] [--jobs N] [--time-budget S]
"""

import argparse
import sys

from fairsched.cli import main

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out", nargs="?", default="results/desk")
    p.add_argument("--backend", default="bundled")
    p.add_argument("--jobs", default="1")
    p.add_argument("--time-budget", default=None)
    a = p.parse_args()
    argv = ["experiment", "--tasks", "12", "--workers", "3", "--delta", "5", "--epsilon", "0.05",
            "--replications", "50", "--samples", "2000", "--seed", "0", "--backend", a.backend,
            "--jobs", a.jobs, "-o", a.out]
    if a.time_budget:
        argv += ["--time-budget", a.time_budget]
    sys.exit(main(argv))
