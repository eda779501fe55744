"""Declarative optical bench: a line-oriented text format and its interpreter.

One element per line (or per ``;``-separated statement)::

    # comment
    grid nx=2048 ny=2048 dx=15um dy=15um wavelength=1554.7nm
    source gaussian w0=2.0417mm
    slm x0=271um a=0.05 f=0.5m extent=1.04cm pixel=10.4um ramp=off
    propagate z=0.5m
    lens f=0.5m
    propagate z=0.5m
    tap focal

Element names are case-insensitive. Every length needs a unit suffix
(``nm``, ``um``, ``mm``, ``cm`` or ``m``); angles take ``rad``, ``mrad`` or ``urad``.
"""

from __future__ import annotations

import re
from decimal import Decimal
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .field import Field, Grid, read_field, write_field, write_intensity_pgm
from .masks import TWO_PI, apply_to_field, design_for_airy, read_mask, render
from .modes import AiryParams, airy_mode, fiber_mode, gaussian_mode
from .propagation import DEFAULT_GUARD, apply_block, apply_circular_aperture, apply_lens, propagate

DEFAULT_GRID = Grid(2048, 2048, 15e-6, 15e-6, 1554.7e-9)

# decimal exponents so "20um" parses to exactly float("20e-6")
LENGTH_UNITS = {"nm": -9, "um": -6, "mm": -3, "cm": -2, "m": 0}
ANGLE_UNITS = {"urad": -6, "mrad": -3, "rad": 0}
_QUANTITY = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)([a-zA-Z]*)$")


class BenchParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class BenchElementError(RuntimeError):
    """An element failed while the bench was running."""

    def __init__(self, index: int, element: "Element", cause: Exception):
        super().__init__(f"element {index} ({element.kind}, line {element.line}): {cause}")
        self.index = index
        self.element = element
        self.cause = cause


# key -> value kind, per element
_SCHEMA = {
    "grid": {"nx": "int", "ny": "int", "dx": "length", "dy": "length", "wavelength": "length", "guard": "guard", "method": "word"},
    "source": {
        "w0": "length", "mfd": "length", "x0": "length", "y0": "length", "a": "float",
        "x": "length", "y": "length", "tilt_x": "angle", "tilt_y": "angle", "path": "word",
    },
    "slm": {
        "mask": "word", "x0": "length", "a": "float", "f": "length", "extent": "length", "pixel": "length",
        "ramp_period": "length", "ramp": "word", "levels": "int", "w_g": "length",
        "offset_x": "length", "offset_y": "length",
    },
    "lens": {"f": "length"},
    "propagate": {"z": "length"},
    "block": {"edge": "length", "side": "word"},
    "pinhole": {"d": "length", "x": "length", "y": "length"},
    "iris": {"d": "length", "x": "length", "y": "length"},
    "tap": {},
}
_REQUIRED = {"lens": ("f",), "propagate": ("z",), "block": ("edge",), "pinhole": ("d",), "iris": ("d",)}
_SOURCE_KINDS = {"gaussian": ("w0",), "airy": ("x0", "a"), "fiber": ("mfd",), "plane": (), "file": ("path",)}
_POSITIONAL = {"source", "tap"}


@dataclass(frozen=True)
class Element:
    kind: str
    params: dict = field(default_factory=dict)
    line: int = 0
    arg: str | None = None  # source kind or tap label

    @property
    def label(self) -> str | None:
        return self.arg if self.kind == "tap" else None


@dataclass(frozen=True)
class BenchConfig:
    elements: tuple
    grid: Grid = DEFAULT_GRID
    guard: float | None = DEFAULT_GUARD
    method: str = "angular"
    base_dir: Path = Path(".")

    @property
    def taps(self) -> list[str]:
        return [e.label for e in self.elements if e.kind == "tap"]

    @property
    def total_z(self) -> float:
        return sum(e.params["z"] for e in self.elements if e.kind == "propagate")

    def without(self, kind: str) -> "BenchConfig":
        return replace(self, elements=tuple(e for e in self.elements if e.kind != kind))

    def with_elements(self, elements) -> "BenchConfig":
        return replace(self, elements=tuple(elements))


@dataclass(frozen=True, eq=False)
class ElementResult:
    label: str
    field: Field
    z: float


def parse_quantity(text: str, kind: str, line: int = 0) -> float:
    m = _QUANTITY.match(text)
    if not m:
        raise BenchParseError(line, f"malformed number {text!r}")
    number, unit = m.group(1), m.group(2).lower()
    value = float(number)
    if kind == "length":
        if unit not in LENGTH_UNITS:
            raise BenchParseError(line, f"length {text!r} needs a unit suffix (nm, um, mm, cm, m)")
        return float(Decimal(number).scaleb(LENGTH_UNITS[unit]))
    if kind == "angle":
        if unit not in ANGLE_UNITS:
            raise BenchParseError(line, f"angle {text!r} needs a unit suffix (rad, mrad, urad)")
        return float(Decimal(number).scaleb(ANGLE_UNITS[unit]))
    if unit:
        raise BenchParseError(line, f"unexpected unit in {text!r}")
    return value


def _parse_value(key, text, kind, line):
    if kind == "word":
        return text
    if kind == "guard":
        return None if text.lower() == "off" else parse_quantity(text, "float", line)
    if kind == "int":
        value = parse_quantity(text, "float", line)
        if value != int(value):
            raise BenchParseError(line, f"{key} must be an integer, got {text!r}")
        return int(value)
    return parse_quantity(text, kind, line)


def _statements(doc: str):
    for lineno, raw in enumerate(doc.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        for stmt in body.split(";"):
            tokens = stmt.split()
            if tokens:
                yield lineno, tokens


def parse_bench(doc: str, base_dir=".") -> BenchConfig:
    """Parse and validate a bench document; all lengths come back in meters."""
    elements = []
    grid_params = {}
    grid_line = None
    for lineno, tokens in _statements(doc):
        kind = tokens[0].lower()
        if kind not in _SCHEMA:
            raise BenchParseError(lineno, f"unknown element {tokens[0]!r}")
        rest = tokens[1:]
        arg = None
        if kind in _POSITIONAL:
            if not rest or "=" in rest[0]:
                what = "source kind" if kind == "source" else "tap label"
                raise BenchParseError(lineno, f"{kind} needs a {what}")
            arg, rest = rest[0], rest[1:]
            if kind == "source":
                arg = arg.lower()
                if arg not in _SOURCE_KINDS:
                    raise BenchParseError(lineno, f"unknown source kind {arg!r}")
        params = {}
        for tok in rest:
            if "=" not in tok:
                raise BenchParseError(lineno, f"expected key=value, got {tok!r}")
            key, text = tok.split("=", 1)
            key = key.lower()
            if key not in _SCHEMA[kind]:
                raise BenchParseError(lineno, f"{kind} has no parameter {key!r}")
            if key in params:
                raise BenchParseError(lineno, f"parameter {key!r} given twice")
            params[key] = _parse_value(key, text, _SCHEMA[kind][key], lineno)
        required = _REQUIRED.get(kind, ()) + (_SOURCE_KINDS[arg] if kind == "source" else ())
        for key in required:
            if key not in params:
                raise BenchParseError(lineno, f"{kind} requires {key}=")
        _check_element(kind, arg, params, lineno)
        if kind == "grid":
            if grid_line is not None:
                raise BenchParseError(lineno, f"grid already defined on line {grid_line}")
            grid_line, grid_params = lineno, params
            continue
        elements.append(Element(kind, params, lineno, arg))

    if not elements:
        raise BenchParseError(0, "empty bench: a source element is required")
    sources = [e for e in elements if e.kind == "source"]
    if not sources:
        raise BenchParseError(elements[0].line, "missing source element")
    if elements[0].kind != "source":
        raise BenchParseError(elements[0].line, "the source must be the first element")
    if len(sources) > 1:
        raise BenchParseError(sources[1].line, "only one source element is allowed")
    seen = {}
    for e in elements:
        if e.kind == "tap":
            if e.arg in seen:
                raise BenchParseError(e.line, f"duplicate tap label {e.arg!r} (first on line {seen[e.arg]})")
            seen[e.arg] = e.line

    g = DEFAULT_GRID
    try:
        grid = Grid(
            grid_params.get("nx", g.nx),
            grid_params.get("ny", grid_params.get("nx", g.ny)),
            grid_params.get("dx", g.dx),
            grid_params.get("dy", grid_params.get("dx", g.dy)),
            grid_params.get("wavelength", g.wavelength),
        )
    except ValueError as exc:
        raise BenchParseError(grid_line or 0, str(exc)) from exc
    method = grid_params.get("method", "angular")
    if method not in ("angular", "fresnel"):
        raise BenchParseError(grid_line, f"unknown propagation method {method!r}")
    return BenchConfig(
        tuple(elements),
        grid,
        grid_params.get("guard", DEFAULT_GUARD),
        method,
        Path(base_dir),
    )


def _check_element(kind, arg, params, line):
    if kind == "propagate" and params["z"] < 0:
        raise BenchParseError(line, f"propagation distance must be >= 0, got {params['z']} m")
    if kind == "lens" and params["f"] == 0:
        raise BenchParseError(line, "lens focal length must be nonzero")
    if kind == "block" and params.get("side", "left") not in ("left", "right"):
        raise BenchParseError(line, "block side must be left or right")
    if kind in ("pinhole", "iris") and params["d"] < 0:
        raise BenchParseError(line, "aperture diameter must be >= 0")
    if kind == "slm":
        if "mask" not in params and not {"x0", "a", "f"} <= params.keys():
            raise BenchParseError(line, "slm needs mask=<file> or an inline design (x0=, a=, f=)")
        if params.get("ramp", "default") not in ("off", "default"):
            raise BenchParseError(line, "ramp must be 'off' or 'default' (use ramp_period= for a custom ramp)")
        if params.get("levels", 0) < 0 or params.get("levels", 0) == 1:
            raise BenchParseError(line, "levels must be 0 or >= 2")
    if kind == "source" and arg == "airy" and not 0 < params["a"] < 1:
        raise BenchParseError(line, "Airy truncation a must lie in (0, 1)")


def load_bench(path) -> BenchConfig:
    path = Path(path)
    return parse_bench(path.read_text(encoding="utf-8"), base_dir=path.parent)


def _resolve(cfg: BenchConfig, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else cfg.base_dir / p


def build_source(e: Element, cfg: BenchConfig) -> Field:
    g, p = cfg.grid, e.params
    center = (p.get("x", 0.0), p.get("y", 0.0))
    tilt = (p.get("tilt_x", 0.0), p.get("tilt_y", 0.0))
    if e.arg == "gaussian":
        return gaussian_mode(p["w0"], g, center, tilt)
    if e.arg == "fiber":
        return fiber_mode(p["mfd"], g, center, tilt)
    if e.arg == "airy":
        return airy_mode(AiryParams(p["x0"], p.get("y0", p["x0"]), p["a"]), g)
    if e.arg == "plane":
        k = g.k
        amp = np.outer(np.exp(1j * k * tilt[1] * g.y), np.exp(1j * k * tilt[0] * g.x))
        return Field(amp, g.dx, g.dy, g.wavelength)
    f = read_field(_resolve(cfg, p["path"]))
    if f.grid != g:
        raise ValueError(f"source file grid {f.grid} does not match bench grid {g}")
    return f


def build_mask(e: Element, cfg: BenchConfig):
    p = e.params
    if "mask" in p:
        return read_mask(_resolve(cfg, p["mask"]))
    pixel = p.get("pixel", 10.4e-6)
    if "ramp_period" in p:
        k_ramp = TWO_PI / p["ramp_period"]
    elif p.get("ramp") == "off":
        k_ramp = 0.0
    else:
        k_ramp = None
    design = design_for_airy(
        p["x0"], p["a"], p["f"], cfg.grid.wavelength, p.get("extent", 1.04e-2), pixel, k_ramp=k_ramp, w_g=p.get("w_g")
    )
    return render(design, p.get("levels", 0))


def apply_element(f: Field, e: Element, cfg: BenchConfig) -> Field:
    p = e.params
    if e.kind == "slm":
        return apply_to_field(f, build_mask(e, cfg), (p.get("offset_x", 0.0), p.get("offset_y", 0.0)))
    if e.kind == "lens":
        return apply_lens(f, p["f"])
    if e.kind == "propagate":
        return propagate(f, p["z"], method=cfg.method, guard=cfg.guard)
    if e.kind == "block":
        return apply_block(f, p["edge"], p.get("side", "left"))
    if e.kind in ("pinhole", "iris"):
        return apply_circular_aperture(f, p["d"], (p.get("x", 0.0), p.get("y", 0.0)))
    if e.kind == "tap":
        return f
    raise ValueError(f"cannot apply element {e.kind!r}")


def run_bench(cfg: BenchConfig, start: Field | None = None) -> list[ElementResult]:
    """Fold the elements over the source field; one result per tap, in order.

    ``start`` replaces the source element's field, which lets callers reuse a
    previously computed source.
    """
    results = []
    z = 0.0
    f = start
    for index, e in enumerate(cfg.elements):
        try:
            if e.kind == "source":
                f = build_source(e, cfg) if start is None else start
                continue
            f = apply_element(f, e, cfg)
        except Exception as exc:
            raise BenchElementError(index, e, exc) from exc
        if e.kind == "propagate":
            z += e.params["z"]
        elif e.kind == "tap":
            results.append(ElementResult(e.label, f, z))
    return results


def write_taps(results: list[ElementResult], out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for r in results:
        write_field(r.field, out_dir / f"{r.label}.afld")
        write_intensity_pgm(r.field, out_dir / f"{r.label}.pgm")
        written += [out_dir / f"{r.label}.afld", out_dir / f"{r.label}.pgm"]
    return written
