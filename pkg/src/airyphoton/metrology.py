"""Simulated diagnostics: camera frames, pinhole scans, lobe trajectories, fiber coupling."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.signal import find_peaks

from .bench import BenchConfig, Element, run_bench
from .field import Field, IntensityImage
from .modes import SMF28_MFD, Profile1D, gaussian_mode

#: Two resolved lobes closer than this (dB) make the brightest one ambiguous.
AMBIGUITY_DB = 0.5

#: Focal length of the aspheric fiber collimator (C220TMD-C class).
COLLIMATOR_FOCAL = 11e-3


def _bin_matrix(n_out, pitch, coords, d):
    centers = (np.arange(n_out) - n_out // 2) * pitch
    lo = np.maximum((centers - pitch / 2)[:, None], (coords - d / 2)[None, :])
    hi = np.minimum((centers + pitch / 2)[:, None], (coords + d / 2)[None, :])
    return sp.csr_matrix(np.clip(hi - lo, 0, None) / d)


def camera_image(f: Field, pitch: float) -> IntensityImage:
    """Box-integrate intensity into square camera pixels of ``pitch``; peak-normalized.

    Camera pixels are center-anchored like the field grid, and a field sample
    straddling two camera pixels is split by area.
    """
    if pitch < f.dx * (1 - 1e-12) or pitch < f.dy * (1 - 1e-12):
        raise ValueError(f"camera pitch {pitch:.4g} m is finer than the field pitch ({f.dx:.4g}, {f.dy:.4g}) m")
    nx = int(np.floor(f.nx * f.dx / pitch + 1e-9))
    ny = int(np.floor(f.ny * f.dy / pitch + 1e-9))
    wx = _bin_matrix(nx, pitch, f.x, f.dx)
    wy = _bin_matrix(ny, pitch, f.y, f.dy)
    img = np.asarray(wx @ np.asarray(wy @ f.intensity()).T).T
    peak = img.max()
    if peak > 0:
        img = img / peak
    return IntensityImage(img, pitch, "peak" if peak > 0 else "absolute")


@dataclass(frozen=True, eq=False)
class ScanResult:
    profile: Profile1D
    diameter: float
    step: float
    range: float
    axis_y: float
    plane: str = ""

    def metadata(self) -> dict:
        return {
            "pinhole_diameter_m": self.diameter,
            "step_m": self.step,
            "range_m": self.range,
            "axis_y_m": self.axis_y,
            "plane": self.plane,
        }


def _disc_weights(dxs, dys, r, dx, dy, sub=8):
    # fraction of each sample cell inside the disc, by sub x sub supersampling
    o = (np.arange(sub) + 0.5) / sub - 0.5
    px = dxs[None, :, None, None] + o[None, None, None, :] * dx
    py = dys[:, None, None, None] + o[None, None, :, None] * dy
    return ((px**2 + py**2) <= r * r).mean(axis=(2, 3))


def pinhole_power(f: Field, diameter: float, center) -> float:
    """Power through a disc, with rim samples weighted by their covered area."""
    r = diameter / 2
    x, y = f.x, f.y
    if (x[0] > center[0] - r) or (x[-1] < center[0] + r) or (y[0] > center[1] - r) or (y[-1] < center[1] + r):
        raise ValueError(f"pinhole at {center} leaves the grid")
    ix = np.nonzero(np.abs(x - center[0]) <= r + f.dx)[0]
    iy = np.nonzero(np.abs(y - center[1]) <= r + f.dy)[0]
    w = _disc_weights(x[ix] - center[0], y[iy] - center[1], r, f.dx, f.dy)
    I = f.intensity()[iy[0]:iy[-1] + 1, ix[0]:ix[-1] + 1]
    return float(np.sum(I * w) * f.dx * f.dy)


def pinhole_scan(f: Field, diameter: float, step: float, range_: float, axis_y: float, center_x: float = 0.0,
                 plane: str = "") -> ScanResult:
    """Translate a pinhole along x (at height ``axis_y``) and record transmitted power.

    Positions run from ``center_x - range_/2`` to ``center_x + range_/2`` in
    increments of ``step``; this is the disc-convolved intensity sampled on
    the scan line.
    """
    if range_ < 2 * step:
        raise ValueError("scan range must cover at least two steps")
    n = int(round(range_ / step)) + 1
    positions = center_x - range_ / 2 + step * np.arange(n)
    values = [pinhole_power(f, diameter, (p, axis_y)) for p in positions]
    return ScanResult(Profile1D(positions, values), diameter, step, range_, axis_y, plane)


def subsample_peak(x: np.ndarray, v: np.ndarray) -> float:
    """Argmax refined by a 3-point parabola."""
    k = int(np.argmax(v))
    if k == 0 or k == len(v) - 1:
        return float(x[k])
    a, b, c = v[k - 1], v[k], v[k + 1]
    denom = a - 2 * b + c
    shift = 0.0 if denom == 0 else 0.5 * (a - c) / denom
    return float(x[k] + shift * (x[k + 1] - x[k]))


def lobe_ratio(v: np.ndarray) -> float:
    """Height of the second-brightest resolved lobe relative to the brightest.

    A lobe counts as resolved when its prominence is at least half its height,
    so ripples riding on one lobe are not mistaken for a second lobe.
    """
    peaks, props = find_peaks(np.concatenate(([0.0], v, [0.0])), prominence=0)
    heights = v[peaks - 1]
    resolved = heights[props["prominences"] >= 0.5 * heights]
    if resolved.size < 2:
        return 0.0
    top = np.sort(resolved)[::-1]
    return float(top[1] / top[0])


def main_lobe(f: Field) -> tuple[float, float]:
    """Sub-pixel peak of the y-integrated and x-integrated intensity profiles."""
    I = f.intensity()
    return subsample_peak(f.x, I.sum(axis=0)), subsample_peak(f.y, I.sum(axis=1))


@dataclass(frozen=True, eq=False)
class TrajectoryFit:
    """Least-squares ``x = c0 + c1 z + c2 z**2`` through main-lobe positions."""

    z: np.ndarray
    x_peak: np.ndarray
    coeffs: tuple
    r2: float
    linear_r2: float
    excluded: tuple = ()
    lobe_ratios: tuple = ()

    @property
    def c0(self) -> float:
        return self.coeffs[0]

    @property
    def c1(self) -> float:
        return self.coeffs[1]

    @property
    def c2(self) -> float:
        return self.coeffs[2]

    def deflection(self, z: float) -> float:
        """Quadratic (accelerating) part of the displacement at ``z``."""
        return self.c2 * z**2

    def __call__(self, z):
        return self.c0 + self.c1 * np.asarray(z) + self.c2 * np.asarray(z) ** 2


def _r2(y, yhat):
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-30:
        return 1.0 if ss_res <= 1e-30 else 0.0
    return float(np.clip(1 - ss_res / ss_tot, 0.0, 1.0))


def peak_trajectory(taps, ambiguity_db: float = AMBIGUITY_DB) -> TrajectoryFit:
    """Fit a parabola to the x position of the brightest lobe across planes.

    ``taps`` is a sequence of ``(z, Field)``. Planes where a second resolved
    lobe is within ``ambiguity_db`` of the brightest are flagged and left out
    of the fit.
    """
    taps = list(taps)
    if len(taps) < 3:
        raise ValueError("a trajectory fit needs at least 3 planes")
    zs, xs, excluded, ratios = [], [], [], []
    limit = 10 ** (-ambiguity_db / 10)
    for z, f in taps:
        profile = f.intensity().sum(axis=0)
        ratio = lobe_ratio(profile)
        ratios.append(ratio)
        if ratio >= limit:
            excluded.append(float(z))
            continue
        zs.append(float(z))
        xs.append(subsample_peak(f.x, profile))
    if len(zs) < 3:
        raise ValueError(f"only {len(zs)} unambiguous planes left (excluded z={excluded})")
    z, x = np.array(zs), np.array(xs)
    c2, c1, c0 = np.polyfit(z, x, 2)
    lin = np.polyfit(z, x, 1)
    return TrajectoryFit(
        z, x, (float(c0), float(c1), float(c2)),
        _r2(x, np.polyval([c2, c1, c0], z)),
        _r2(x, np.polyval(lin, z)),
        tuple(excluded), tuple(ratios),
    )


def ballistic_deflection(z: float, x0: float, wavelength: float) -> float:
    """Main-lobe displacement ``z**2 / (4 k**2 x0**3)`` of an ideal Airy beam."""
    k = 2 * np.pi / wavelength
    return z**2 / (4 * k**2 * x0**3)


def _check_same_grid(f, g):
    if not f.same_grid(g):
        raise ValueError("fields live on different grids")


def coupling_efficiency(f: Field, mode: Field) -> float:
    """Normalized overlap ``|<f, mode>|**2 / (||f||**2 ||mode||**2)``."""
    _check_same_grid(f, mode)
    a, b = f.amplitude.ravel(), mode.amplitude.ravel()
    na, nb = np.vdot(a, a).real, np.vdot(b, b).real
    if na == 0 or nb == 0:
        raise ValueError("coupling efficiency of a zero field is undefined")
    return float(min(abs(np.vdot(b, a)) ** 2 / (na * nb), 1.0))


def collected_power(f: Field, mode: Field) -> float:
    """Power of ``f`` projected onto ``mode`` (same units as :func:`total_power`)."""
    _check_same_grid(f, mode)
    b = mode.amplitude.ravel()
    nb = np.vdot(b, b).real
    if nb == 0:
        raise ValueError("collector mode is zero")
    return float(abs(np.vdot(b, f.amplitude.ravel())) ** 2 / nb * f.dx * f.dy)


@dataclass(frozen=True)
class FiberCollector:
    """Single-mode fiber behind a collimator, aligned to ``center`` and ``tilt``.

    The collimator images the fiber mode to a Gaussian of waist
    ``wavelength * collimator_focal / (pi * mfd / 2)`` in the beam. With
    ``collimator_focal=None`` the bare fiber mode is used.
    """

    center: tuple = (0.0, 0.0)
    tilt: tuple = (0.0, 0.0)
    mfd: float = SMF28_MFD
    collimator_focal: float | None = COLLIMATOR_FOCAL
    kind: str = field(default="fiber", init=False)

    def waist(self, wavelength: float) -> float:
        if self.collimator_focal is None:
            return self.mfd / 2
        return wavelength * self.collimator_focal / (np.pi * self.mfd / 2)

    def mode(self, grid) -> Field:
        g = grid.grid if isinstance(grid, Field) else grid
        return gaussian_mode(self.waist(g.wavelength), g, self.center, self.tilt)

    def collect(self, f: Field) -> float:
        return collected_power(f, self.mode(f.grid))


@dataclass(frozen=True)
class PinholeCollector:
    diameter: float
    center: tuple = (0.0, 0.0)
    kind: str = field(default="pinhole", init=False)

    def collect(self, f: Field) -> float:
        return pinhole_power(f, self.diameter, self.center)


@dataclass(frozen=True)
class DropReport:
    p_with: float
    p_without: float
    drop: float
    collector: str = ""

    def to_text(self) -> str:
        return (
            f"p_with = {self.p_with!r}\n"
            f"p_without = {self.p_without!r}\n"
            f"drop = {self.drop!r}\n"
            f"collector = {self.collector}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> "DropReport":
        kv = dict((s.strip() for s in line.split("=", 1)) for line in text.splitlines() if "=" in line and not line.startswith("#"))
        return cls(float(kv["p_with"]), float(kv["p_without"]), float(kv["drop"]), kv.get("collector", ""))


def block_experiment(cfg: BenchConfig, collector, start: Field | None = None) -> DropReport:
    """Collected power at the last tap with and without the bench's single block.

    The elements before the block are run once and shared by both branches;
    ``start`` optionally replaces the source field as in :func:`run_bench`.
    """
    blocks = [i for i, e in enumerate(cfg.elements) if e.kind == "block"]
    if len(blocks) != 1:
        raise ValueError(f"block experiment needs exactly one block element, found {len(blocks)}")
    if not cfg.taps:
        raise ValueError("block experiment needs a final tap as the collection plane")
    bi = blocks[0]
    prefix = cfg.with_elements(cfg.elements[:bi] + (Element("tap", {}, 0, "__block_plane"),))
    at_block = run_bench(prefix, start=start)[-1].field
    placeholder = Element("source", {}, 0, "plane")
    rest = cfg.elements[bi + 1:]
    with_block = run_bench(cfg.with_elements((placeholder, cfg.elements[bi]) + rest), start=at_block)[-1].field
    without = run_bench(cfg.with_elements((placeholder,) + rest), start=at_block)[-1].field
    p_with, p_without = collector.collect(with_block), collector.collect(without)
    if p_without <= 0:
        raise ValueError("no power collected without the block")
    return DropReport(p_with, p_without, 1 - p_with / p_without, collector.kind)


def pattern_shift(a: np.ndarray, b: np.ndarray, pitch: float) -> float:
    """Rigid displacement of profile ``a`` relative to ``b`` from their circular cross-correlation.

    The correlation maximum is refined with a 3-point parabola, so the result
    is sub-sample.
    """
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("profiles must be 1-D and of equal length")
    c = np.fft.irfft(np.fft.rfft(a) * np.conj(np.fft.rfft(b)), n=a.size)
    k = int(np.argmax(c))
    n = a.size
    lo, mid, hi = c[k - 1], c[k], c[(k + 1) % n]
    denom = lo - 2 * mid + hi
    frac = 0.0 if denom == 0 else 0.5 * (lo - hi) / denom
    lag = k if k < n / 2 else k - n
    return float((lag + frac) * pitch)


def aligned_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized correlation of two profiles after aligning their maxima."""
    shift = int(np.argmax(a)) - int(np.argmax(b))
    b = np.roll(b, shift)
    a0, b0 = a - a.mean(), b - b.mean()
    return float(np.dot(a0, b0) / np.sqrt(np.dot(a0, a0) * np.dot(b0, b0)))


def write_scan_csv(scan: ScanResult, path, extra: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for key, value in {**scan.metadata(), **(extra or {})}.items():
            fh.write(f"# {key} = {value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["position_m", "power"])
        for x, v in zip(scan.profile.positions, scan.profile.values):
            w.writerow([repr(float(x)), repr(float(v))])


def write_trajectory_csv(fit: TrajectoryFit, path, extra: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        meta = {
            "c0_m": fit.c0, "c1": fit.c1, "c2_per_m": fit.c2, "r2": fit.r2,
            "excluded_z_m": list(fit.excluded), **(extra or {}),
        }
        for key, value in meta.items():
            fh.write(f"# {key} = {value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z_m", "x_peak_m", "x_fit_m"])
        for z, x in zip(fit.z, fit.x_peak):
            w.writerow([repr(float(z)), repr(float(x)), repr(float(fit(z)))])


def read_csv_table(path) -> tuple[dict, np.ndarray]:
    meta, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif line:
            rows.append(line.split(","))
    return meta, np.array([[float(c) for c in r] for r in rows[1:]])

