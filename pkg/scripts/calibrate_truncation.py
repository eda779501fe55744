"""Main-lobe FWHM of the finite-energy Airy mode versus the truncation factor ``a``.

Prints a table of FWHM(a) at fixed ``x0`` and solves for the ``a`` that gives
a requested FWHM, if one exists in the scanned range. The FWHM is taken from
a dense 1-D profile of ``Ai(x/x0) exp(a x/x0)`` squared.

Usage::

    python scripts/calibrate_truncation.py --x0 271um --target 434um
"""

from __future__ import annotations

import argparse

import numpy as np
from scipy.optimize import brentq

from airyphoton.bench import parse_quantity
from airyphoton.modes import Profile1D, airy_factor, fwhm


def lobe_fwhm(x0: float, a: float, step_frac: float = 1e-3) -> float:
    s = np.arange(-8.0, 4.0, step_frac)
    return fwhm(Profile1D(s * x0, airy_factor(s, a) ** 2))


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--x0", default="271um")
    p.add_argument("--target", default="434um")
    p.add_argument("--a-max", type=float, default=0.9)
    args = p.parse_args(argv)
    x0 = parse_quantity(args.x0, "length")
    target = parse_quantity(args.target, "length")

    grid = np.round(np.concatenate([[0.0, 0.01, 0.02, 0.05, 0.1], np.arange(0.2, args.a_max + 1e-9, 0.1)]), 4)
    widths = np.array([lobe_fwhm(x0, a) for a in grid])
    print(f"x0 = {x0 * 1e6:.1f} um")
    print(f"{'a':>6}  {'FWHM (um)':>10}  {'FWHM / x0':>9}")
    for a, w in zip(grid, widths):
        print(f"{a:6.3f}  {w * 1e6:10.2f}  {w / x0:9.4f}")

    lo, hi = widths.min(), widths.max()
    if lo <= target <= hi:
        i = int(np.argmax(np.sign(widths - target) != np.sign(widths[0] - target)))
        a_star = brentq(lambda a: lobe_fwhm(x0, a) - target, grid[i - 1], grid[i])
        print(f"a reproducing {target * 1e6:.1f} um: {a_star:.4f}")
    else:
        print(f"no a in [0, {args.a_max}] reproduces {target * 1e6:.1f} um "
              f"(range {lo * 1e6:.1f}-{hi * 1e6:.1f} um); x0 for {target * 1e6:.1f} um at a = 0.05: "
              f"{x0 * target / lobe_fwhm(x0, 0.05) * 1e6:.1f} um")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
