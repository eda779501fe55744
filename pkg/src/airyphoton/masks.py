"""Cubic-plus-ramp SLM phase masks for Airy synthesis.

A Gaussian of waist ``w_g`` carrying the cubic phase ``-(u**3 + v**3) / (3 w**3)``,
placed in the front focal plane of a lens of focal length ``f``, produces in
the back focal plane the finite-energy Airy mode with

    x0 = wavelength * f / (2 pi w),    a = (w / w_g)**2.

The cubic term enters with a negative sign: under the transmissive
``exp(+i phase)`` convention, where a positive linear ramp deflects toward
+x, that sign is what orients the main lobe at ``x ~ -x0`` as in
``Ai(x/x0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .field import Field, FieldValidationError, read_pgm16, write_pgm16

TWO_PI = 2 * np.pi


def default_ramp(pixel: float) -> float:
    """Blazed ramp with an 8-pixel period."""
    return TWO_PI / (8 * pixel)


@dataclass(frozen=True)
class MaskDesign:
    """Continuous phase design prior to pixelization.

    Lengths in meters, ``k_ramp`` in rad/m. ``w = inf`` disables the cubic
    term (pure ramp).
    """

    w: float
    k_ramp: float
    f: float
    wavelength: float
    w_g: float
    extent: float
    pixel: float

    def __post_init__(self):
        for name in ("w", "f", "wavelength", "w_g", "extent", "pixel"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if self.extent < 2 * self.pixel:
            raise ValueError("mask extent must cover at least two pixels")

    @property
    def x0(self) -> float:
        return self.wavelength * self.f / (TWO_PI * self.w)

    @property
    def a(self) -> float:
        return (self.w / self.w_g) ** 2

    @property
    def clipped(self) -> bool:
        """The incident Gaussian overfills the mask aperture."""
        return self.w_g > self.extent / 2

    @property
    def npix(self) -> int:
        return int(round(self.extent / self.pixel))

    def phase(self, u, v) -> np.ndarray:
        """Unwrapped design phase at mask coordinates ``u, v`` (broadcast)."""
        # explicit products keep the rounding identical for scalars and arrays
        cubic = 0.0 if math.isinf(self.w) else -(u * u * u + v * v * v) / (3 * self.w**3)
        return cubic + self.k_ramp * u + 0.0 * v


def design_for_airy(
    x0: float,
    a: float,
    f: float,
    wavelength: float,
    extent: float,
    pixel: float,
    k_ramp: float | None = None,
    w_g: float | None = None,
) -> MaskDesign:
    """Mask design whose focal-plane field is the Airy mode ``(x0, x0, a)``.

    ``w_g`` overrides the derived Gaussian waist ``w / sqrt(a)``, e.g. to
    model a fixed collimator; the realized truncation is then ``(w/w_g)**2``.
    """
    for name, value in (("x0", x0), ("a", a), ("f", f), ("wavelength", wavelength), ("extent", extent), ("pixel", pixel)):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value!r}")
    if a >= 1:
        raise ValueError(f"truncation too strong: a={a} must be < 1")
    w = wavelength * f / (TWO_PI * x0)
    return MaskDesign(
        w=w,
        k_ramp=default_ramp(pixel) if k_ramp is None else float(k_ramp),
        f=f,
        wavelength=wavelength,
        w_g=w / math.sqrt(a) if w_g is None else float(w_g),
        extent=extent,
        pixel=pixel,
    )


@dataclass(frozen=True, eq=False)
class PhaseMask:
    """Pixelized, wrapped phase in ``[0, 2 pi)``; ``levels = 0`` means continuous."""

    phase: np.ndarray
    pitch: float
    levels: int = 0
    design: MaskDesign | None = field(default=None, compare=False)

    def __post_init__(self):
        ph = np.asarray(self.phase, dtype=float)
        if ph.ndim != 2:
            raise ValueError("mask phase must be 2-D")
        if np.any(ph < 0) or np.any(ph >= TWO_PI):
            raise ValueError("mask phase must lie in [0, 2 pi)")
        if self.levels < 0 or self.levels == 1:
            raise ValueError(f"levels must be 0 or >= 2, got {self.levels}")
        if not self.pitch > 0:
            raise ValueError("mask pitch must be positive")
        ph.flags.writeable = False
        object.__setattr__(self, "phase", ph)

    @property
    def npix_x(self) -> int:
        return self.phase.shape[1]

    @property
    def npix_y(self) -> int:
        return self.phase.shape[0]

    @property
    def extent(self) -> tuple[float, float]:
        return self.npix_x * self.pitch, self.npix_y * self.pitch

    def pixel_centers(self):
        u = (np.arange(self.npix_x) + 0.5 - self.npix_x / 2) * self.pitch
        v = (np.arange(self.npix_y) + 0.5 - self.npix_y / 2) * self.pitch
        return u, v


def _wrap(phase):
    out = np.mod(phase, TWO_PI)
    out[out >= TWO_PI] = 0.0
    return out


def quantize(phase: np.ndarray, levels: int) -> np.ndarray:
    step = TWO_PI / levels
    q = np.mod(np.rint(phase / step), levels)
    return q * step


def render(design: MaskDesign, levels: int = 0) -> PhaseMask:
    """Sample the design at pixel centers, wrap to ``[0, 2 pi)``, optionally quantize."""
    if levels < 0 or levels == 1:
        raise ValueError(f"levels must be 0 or >= 2, got {levels}")
    n = design.npix
    c = (np.arange(n) + 0.5 - n / 2) * design.pixel
    phase = _wrap(design.phase(c[None, :], c[:, None]))
    if levels:
        phase = quantize(phase, levels)
    return PhaseMask(phase, design.pixel, levels, design)


@dataclass(frozen=True)
class SamplingReport:
    nu_max: float
    nu_x: float
    nu_y: float
    limit: float
    aliased: bool

    def describe(self) -> str:
        state = "ALIASED" if self.aliased else "not aliased"
        return (
            f"{state}: max local phase frequency {self.nu_max:.4g} rad/m "
            f"(x {self.nu_x:.4g}, y {self.nu_y:.4g}) vs pixel limit {self.limit:.4g} rad/m"
        )


def validate_sampling(design: MaskDesign) -> SamplingReport:
    """Compare the largest per-axis phase gradient with the pixel Nyquist limit ``pi/pixel``.

    Along x the gradient ``k_ramp - u**2/w**3`` spans ``[k_ramp - c, k_ramp]``
    with ``c = (extent/2)**2 / w**3``; along y it spans ``[-c, 0]``.
    """
    c = 0.0 if math.isinf(design.w) else (design.extent / 2) ** 2 / design.w**3
    nu_x = max(abs(design.k_ramp), abs(design.k_ramp - c))
    nu_y = c
    nu = max(nu_x, nu_y)
    limit = np.pi / design.pixel
    return SamplingReport(nu, nu_x, nu_y, limit, nu > limit)


def _pixel_index(coords, offset, pitch, npix):
    idx = np.floor((coords - offset) / pitch + npix / 2).astype(np.int64)
    inside = (idx >= 0) & (idx < npix)
    return np.clip(idx, 0, npix - 1), inside


def apply_to_field(f: Field, m: PhaseMask, offset=(0.0, 0.0)) -> Field:
    """Multiply ``f`` by the mask via nearest-pixel lookup; zero outside the mask.

    The SLM aperture acts as the system stop. ``offset`` translates the mask
    center to ``(ox, oy)`` in field coordinates.
    """
    ex, ey = m.extent
    fx, fy = f.nx * f.dx, f.ny * f.dy
    if ex > fx or ey > fy:
        raise FieldValidationError("mask", f"extent {ex:.4g} x {ey:.4g} m exceeds field extent {fx:.4g} x {fy:.4g} m")
    if (abs(offset[0]) + ex / 2 > fx / 2 + f.dx) or (abs(offset[1]) + ey / 2 > fy / 2 + f.dy):
        raise FieldValidationError("offset", f"mask shifted by {offset} leaves the field")
    ix, in_x = _pixel_index(f.x, offset[0], m.pitch, m.npix_x)
    iy, in_y = _pixel_index(f.y, offset[1], m.pitch, m.npix_y)
    phase = m.phase[iy[:, None], ix[None, :]]
    inside = in_y[:, None] & in_x[None, :]
    return f.replace(np.where(inside, f.amplitude * np.exp(1j * phase), 0))


def _meta_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".meta.txt")


def write_mask(m: PhaseMask, path) -> Path:
    """Write a 16-bit PGM (0..2 pi -> 0..65535) and a ``.meta.txt`` sidecar."""
    counts = np.rint(m.phase / TWO_PI * 65536).astype(np.int64) % 65536
    write_pgm16(counts, path)
    lines = [f"pitch = {m.pitch!r}", f"levels = {m.levels}", f"npix_x = {m.npix_x}", f"npix_y = {m.npix_y}"]
    if m.design is not None:
        lines += [f"{fd.name} = {getattr(m.design, fd.name)!r}" for fd in fields(MaskDesign)]
        lines += [f"x0 = {m.design.x0!r}", f"a = {m.design.a!r}"]
    meta = _meta_path(path)
    meta.write_text("\n".join(lines) + "\n")
    return meta


def read_mask(path) -> PhaseMask:
    meta = {}
    for line in _meta_path(path).read_text().splitlines():
        if "=" in line and not line.lstrip().startswith("#"):
            key, value = (s.strip() for s in line.split("=", 1))
            meta[key] = value
    levels = int(meta.get("levels", 0))
    counts = read_pgm16(path).astype(float)
    if levels:
        phase = np.mod(np.rint(counts * levels / 65536), levels) * (TWO_PI / levels)
    else:
        phase = counts * (TWO_PI / 65536)
    design = None
    names = [fd.name for fd in fields(MaskDesign)]
    if all(n in meta for n in names):
        design = MaskDesign(**{n: float(meta[n]) for n in names})
    return PhaseMask(phase, float(meta["pitch"]), levels, design)
