"""Closed-form transverse modes and 1-D profile analytics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import airy

from .field import Field, Grid

#: Location of the first (largest) maximum of Ai(s).
AI_PEAK = -1.0187929716474709

#: SMF-28 mode-field diameter near 1550 nm.
SMF28_MFD = 10.4e-6


@dataclass(frozen=True)
class AiryParams:
    """Scaling factors ``x0, y0`` (m) and truncation ``a`` of a finite-energy Airy mode."""

    x0: float
    y0: float
    a: float

    def __post_init__(self):
        if not (self.x0 > 0 and self.y0 > 0):
            raise ValueError(f"Airy scaling factors must be positive, got x0={self.x0}, y0={self.y0}")
        if not 0 < self.a < 1:
            raise ValueError(f"truncation factor must lie in (0, 1), got a={self.a}")


@dataclass(frozen=True, eq=False)
class Profile1D:
    positions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if p.shape != v.shape or p.ndim != 1:
            raise ValueError("positions and values must be 1-D arrays of equal length")
        if p.size < 3:
            raise ValueError("a profile needs at least 3 points")
        if np.any(np.diff(p) <= 0):
            raise ValueError("positions must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("profile values must be nonnegative")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "values", v)


class UnboundedLobeError(ValueError):
    pass


def airy_ai(s) -> np.ndarray:
    return airy(s)[0]


def airy_factor(s: np.ndarray, a: float) -> np.ndarray:
    """``Ai(s) * exp(a*s)``, the 1-D finite-energy Airy profile."""
    return airy_ai(s) * np.exp(a * s)


def _as_grid(grid) -> Grid:
    return grid.grid if isinstance(grid, Field) else grid


def airy_mode(p: AiryParams, grid) -> Field:
    """Finite-energy 2-D Airy mode ``Ai(x/x0) Ai(y/y0) exp[a(x/x0 + y/y0)]``.

    The result is real, separable and peak-normalized (max |amplitude| = 1).
    The grid must span at least ten scaling lengths per axis so the side
    lobes are represented.
    """
    g = _as_grid(grid)
    wx, wy = g.extent
    if wx < 10 * p.x0 or wy < 10 * p.y0:
        raise ValueError(
            f"grid extent {wx:.3g} x {wy:.3g} m is smaller than 10 scaling lengths ({10 * p.x0:.3g}, {10 * p.y0:.3g} m)"
        )
    fx = airy_factor(g.x / p.x0, p.a)
    fy = airy_factor(g.y / p.y0, p.a)
    amp = np.outer(fy, fx)
    return Field(amp / np.abs(amp).max(), g.dx, g.dy, g.wavelength)


def gaussian_mode(w0: float, grid, center=(0.0, 0.0), tilt=(0.0, 0.0)) -> Field:
    """Unit-power Gaussian ``exp(-r**2 / w0**2)`` with optional offset and tilt.

    ``tilt`` is the propagation angle (rad) in x and y; it is applied as a
    linear phase ``exp(i k (tx x + ty y))``.
    """
    g = _as_grid(grid)
    if not w0 > 2 * max(g.dx, g.dy):
        raise ValueError(f"waist {w0:.3g} m is not resolved by pitch ({g.dx:.3g}, {g.dy:.3g}) m")
    x, y = g.x - center[0], g.y - center[1]
    norm = np.sqrt(2 / (np.pi * w0**2))
    fx = np.exp(-x**2 / w0**2 + 1j * g.k * tilt[0] * g.x)
    fy = np.exp(-y**2 / w0**2 + 1j * g.k * tilt[1] * g.y)
    return Field(norm * np.outer(fy, fx), g.dx, g.dy, g.wavelength)


def fiber_mode(mfd: float, grid, center=(0.0, 0.0), tilt=(0.0, 0.0)) -> Field:
    """Gaussian approximation of a single-mode fiber's fundamental mode."""
    return gaussian_mode(mfd / 2, grid, center, tilt)


def _crossing(x, v, peak, step, half):
    i = peak
    while 0 <= i + step < len(v):
        i += step
        if v[i] < half:
            j = i - step
            return x[j] + (half - v[j]) / (v[i] - v[j]) * (x[i] - x[j])
    raise UnboundedLobeError("profile never drops below half maximum on one side of the peak")


def fwhm(p: Profile1D) -> float:
    """Full width at half maximum of the lobe holding the global maximum.

    Walks outward from the peak to the first half-maximum crossing on each
    side and interpolates linearly; side lobes are never considered.
    """
    v, x = p.values, p.positions
    k = int(np.argmax(v))
    if k == 0 or k == len(v) - 1:
        raise UnboundedLobeError("global maximum lies on the profile boundary")
    half = v[k] / 2
    return float(_crossing(x, v, k, 1, half) - _crossing(x, v, k, -1, half))


def x_profile(f: Field, row: int | None = None) -> Profile1D:
    """Intensity along x, either through ``row`` or through the brightest row."""
    I = f.intensity()
    if row is None:
        row = int(np.unravel_index(np.argmax(I), I.shape)[0])
    return Profile1D(f.x, I[row])


def write_profile_csv(p: Profile1D, path, header: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for key, value in (header or {}).items():
            fh.write(f"# {key} = {value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["position_m", "value"])
        for x, v in zip(p.positions, p.values):
            w.writerow([repr(float(x)), repr(float(v))])


def read_profile_csv(path) -> Profile1D:
    rows = [line for line in Path(path).read_text().splitlines() if line and not line.startswith("#")]
    data = np.array([[float(c) for c in r.split(",")] for r in rows[1:]])
    return Profile1D(data[:, 0], data[:, 1])
