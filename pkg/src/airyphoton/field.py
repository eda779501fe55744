"""Sampled scalar fields on a uniform, center-anchored grid.

Sample ``(i, j)`` sits at ``x = (i - nx//2) * dx``, ``y = (j - ny//2) * dy``.
Amplitudes are stored as a C-ordered ``(ny, nx)`` complex128 array, i.e. rows
run along y and the x index is the fast one.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FIELD_MAGIC = b"AFLD"
FIELD_VERSION = 1
_HEADER = struct.Struct("<4sIIIddd")


class FieldValidationError(ValueError):
    """Grid metadata or amplitude shape violates the field invariants."""

    def __init__(self, name: str, message: str):
        super().__init__(f"{name}: {message}")
        self.name = name


class FieldFileError(IOError):
    pass


class NotAFieldFile(FieldFileError):
    pass


class TruncatedFieldFile(FieldFileError):
    pass


class FieldVersionError(FieldFileError):
    pass


def _check_grid(nx, ny, dx, dy, wavelength):
    for name, value in (("nx", nx), ("ny", ny)):
        if int(value) != value or value < 2:
            raise FieldValidationError(name, f"must be an integer >= 2, got {value!r}")
    for name, value in (("dx", dx), ("dy", dy), ("wavelength", wavelength)):
        if not np.isfinite(value) or value <= 0:
            raise FieldValidationError(name, f"must be positive, got {value!r}")


@dataclass(frozen=True)
class Grid:
    """Sampling geometry shared by every field in a simulation."""

    nx: int
    ny: int
    dx: float
    dy: float
    wavelength: float

    def __post_init__(self):
        _check_grid(self.nx, self.ny, self.dx, self.dy, self.wavelength)

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) - self.nx // 2) * self.dx

    @property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) - self.ny // 2) * self.dy

    @property
    def extent(self) -> tuple[float, float]:
        return self.nx * self.dx, self.ny * self.dy

    @property
    def k(self) -> float:
        return 2 * np.pi / self.wavelength

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Broadcastable ``(1, nx)`` and ``(ny, 1)`` coordinate arrays."""
        return self.x[None, :], self.y[:, None]

    def zeros(self) -> "Field":
        return Field(np.zeros((self.ny, self.nx), dtype=np.complex128), self.dx, self.dy, self.wavelength)


@dataclass(frozen=True, eq=False)
class Field:
    """Complex transverse amplitude with its grid metadata.

    Intensity is ``|amplitude|**2``. Instances are treated as immutable; the
    amplitude buffer is marked read-only on construction.
    """

    amplitude: np.ndarray
    dx: float
    dy: float
    wavelength: float

    def __post_init__(self):
        amp = np.ascontiguousarray(self.amplitude, dtype=np.complex128)
        if amp.ndim != 2:
            raise FieldValidationError("amplitude", f"expected a 2-D array, got shape {amp.shape}")
        ny, nx = amp.shape
        _check_grid(nx, ny, self.dx, self.dy, self.wavelength)
        amp.flags.writeable = False
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dy", float(self.dy))
        object.__setattr__(self, "wavelength", float(self.wavelength))

    @property
    def nx(self) -> int:
        return self.amplitude.shape[1]

    @property
    def ny(self) -> int:
        return self.amplitude.shape[0]

    @property
    def grid(self) -> Grid:
        return Grid(self.nx, self.ny, self.dx, self.dy, self.wavelength)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def y(self) -> np.ndarray:
        return self.grid.y

    def intensity(self) -> np.ndarray:
        a = self.amplitude
        return a.real**2 + a.imag**2

    def replace(self, amplitude) -> "Field":
        """New field on the same grid carrying ``amplitude``."""
        return Field(amplitude, self.dx, self.dy, self.wavelength)

    def same_grid(self, other: "Field") -> bool:
        return (
            self.amplitude.shape == other.amplitude.shape
            and self.dx == other.dx
            and self.dy == other.dy
            and self.wavelength == other.wavelength
        )


def new_field(nx: int, ny: int, dx: float, dy: float, wavelength: float) -> Field:
    """Zero-amplitude field; raises :class:`FieldValidationError` on bad metadata."""
    return Grid(nx, ny, dx, dy, wavelength).zeros()


def total_power(f: Field) -> float:
    """Sum of ``|amplitude|**2 * dx * dy``."""
    return float(np.sum(f.intensity()) * f.dx * f.dy)


def centroid(f: Field) -> tuple[float, float]:
    I = f.intensity()
    total = I.sum()
    if total == 0:
        raise ValueError("centroid of a zero field is undefined")
    x, y = f.x, f.y
    return float(I.sum(axis=0) @ x / total), float(I.sum(axis=1) @ y / total)


def write_field(f: Field, path) -> None:
    header = _HEADER.pack(FIELD_MAGIC, FIELD_VERSION, f.nx, f.ny, f.dx, f.dy, f.wavelength)
    payload = f.amplitude.astype("<c16", copy=False).tobytes(order="C")
    Path(path).write_bytes(header + payload)


def read_field(path) -> Field:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != FIELD_MAGIC:
        raise NotAFieldFile(f"{path}: not a field file")
    if len(data) < _HEADER.size:
        raise TruncatedFieldFile(f"{path}: header truncated ({len(data)} bytes)")
    _, version, nx, ny, dx, dy, wavelength = _HEADER.unpack_from(data)
    if version != FIELD_VERSION:
        raise FieldVersionError(f"{path}: unsupported field file version {version}")
    expected = nx * ny * 16
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise TruncatedFieldFile(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    amp = np.frombuffer(payload, dtype="<c16").reshape(ny, nx).astype(np.complex128)
    return Field(amp, dx, dy, wavelength)


@dataclass(frozen=True, eq=False)
class IntensityImage:
    """Nonnegative intensity samples, e.g. a simulated camera frame."""

    values: np.ndarray
    pitch: float
    normalization: str = "absolute"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("intensity image must be 2-D")
        if np.any(v < 0):
            raise ValueError("intensity values must be nonnegative")
        if self.normalization not in ("peak", "absolute"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.normalization == "peak" and v.size and v.max() != 1.0:
            raise ValueError("peak-normalized image must have max == 1")
        object.__setattr__(self, "values", v)

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) - self.nx // 2) * self.pitch

    @property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) - self.ny // 2) * self.pitch


def write_pgm16(values: np.ndarray, path) -> None:
    """Binary 16-bit PGM; ``values`` must already be scaled to 0..65535."""
    v = np.asarray(values)
    ny, nx = v.shape
    head = f"P5\n{nx} {ny}\n65535\n".encode("ascii")
    Path(path).write_bytes(head + v.astype(">u2").tobytes())


def read_pgm16(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5" or int(tokens[3]) != 65535:
        raise ValueError(f"{path}: not a 16-bit binary PGM")
    nx, ny = int(tokens[1]), int(tokens[2])
    pos += 1
    return np.frombuffer(data[pos:pos + 2 * nx * ny], dtype=">u2").reshape(ny, nx).astype(np.uint16)


def write_intensity_pgm(f: Field, path) -> None:
    """Peak-normalized 16-bit intensity quick-look."""
    I = f.intensity()
    peak = I.max()
    scaled = np.zeros_like(I) if peak == 0 else I / peak
    write_pgm16(np.rint(scaled * 65535), path)
