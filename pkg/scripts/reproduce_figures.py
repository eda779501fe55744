"""Run every shipped scenario through the command line and print a one-line summary each.

Artifacts land under ``--out`` (default ``runs/``), one timestamped directory
per command, each with its own ``manifest.txt``.

Usage::

    python scripts/reproduce_figures.py --out runs
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from airyphoton.cli import main as cli

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

#: (command, scenario) pairs; the block/trajectory scenario serves two commands.
RUNS = [
    ("coincidence", "fig2_unmodulated"),
    ("coincidence", "fig2_airy"),
    ("scan", "fig3_scan"),
    ("trajectory", "fig4_block_trajectory"),
    ("block", "fig4_block_trajectory"),
]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--out", default=str(ROOT / "runs"))
    args = p.parse_args(argv)
    status = 0
    for command, scenario in RUNS:
        print(f"== {command} {scenario}")
        t = time.perf_counter()
        code = cli([command, "--config", str(SCENARIOS / f"{scenario}.yaml"), "--out", args.out])
        print(f"   exit {code} in {time.perf_counter() - t:.1f} s")
        status = status or code
    return status


if __name__ == "__main__":
    raise SystemExit(main())
