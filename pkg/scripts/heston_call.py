#!/usr/bin/env python3
"""At-the-money call under the Heston model, splitting-scheme couplings.

Calibrates the rates (expect weak order 2 with a tiny constant, so the
planner clamps the last level to 1 at these tolerances), then runs both
the plain and the weighted multilevel estimators.
"""

import sys

from mlmc_sde.cli import main

COMMON = [
    "--model", "heston",
    "--payoff", "heston-call",
    "--coupling", "nv",
    "--pilot-m", "100000",
    "--seed", "41",
]

if __name__ == "__main__":
    code = main(["calibrate", *COMMON, "--out", "out", *sys.argv[1:]])
    for estimator in ("mlmc", "ml2r"):
        code = code or main([
            "run", *COMMON,
            "--estimator", estimator,
            "--nv-level0", "single",
            "--eps", "2^-7", "--eps", "2^-8", "--eps", "2^-9",
            "--out", f"out/heston-{estimator}",
            *sys.argv[1:],
        ])
    sys.exit(code)
