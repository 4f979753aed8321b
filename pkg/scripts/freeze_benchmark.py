#!/usr/bin/env python3
"""Regenerate the frozen benchmark convergence log under tests/data/.

The acceptance suite replays the two-scatterer benchmark and compares every
history field except wall-clock seconds against this file at 1e-8 relative,
so rerun this script only when a deliberate numerical change is being
frozen in.
"""

import os
import sys

from lagfwi.config import make_observed_data, true_model_grid, two_scatterer_benchmark
from lagfwi.fileio import write_log
from lagfwi.iterations import run_inversion


def main() -> int:
    config = two_scatterer_benchmark()
    data = make_observed_data(config)
    result = run_inversion(config, data, true_model=true_model_grid(config))

    target = os.path.join(
        os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
        "tests",
        "data",
        "benchmark_log.csv",
    )
    os.makedirs(os.path.dirname(target), exist_ok=True)
    write_log(target, result.history, scheme=config.scheme)
    last = result.history[-1]
    print(f"wrote {target}")
    print(
        f"status={result.status} rows={len(result.history)} "
        f"final model_error={last.model_error:.6e}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
