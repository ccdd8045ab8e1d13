"""Single network vs ensemble on the same dataset, seed, and SGD budget.

Usage: python scripts/run_comparison.py [workdir]
"""

import sys
from pathlib import Path

from selfieboost.cli import main as cli_main


def main() -> int:
    workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out_comparison")
    workdir.mkdir(parents=True, exist_ok=True)
    data = workdir / "data.csv"

    code = cli_main([
        "gen-data", "--m", "2000", "--d", "10", "--seed", "42",
        "--out", str(data), "--teacher-out", str(workdir / "teacher.json"),
    ])
    if code != 0:
        return code
    return cli_main([
        "compare", "--data", str(data),
        "--hidden", "32", "--rho", "0.1", "--n", "256",
        "--sgd-steps", "500", "--lr", "0.05", "--batch", "32",
        "--T", "50", "--init-scale", "0", "--seed", "42",
        "--wall-clock",
    ])


if __name__ == "__main__":
    sys.exit(main())
