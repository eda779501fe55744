"""Scenario configuration: one YAML document per experiment.

A scenario names a bench file, the parameters of each experiment section
(``mask``, ``scan``, ``trajectory``, ``block``, ``counting``), an output
directory and a seed. Plain numbers are SI; strings may carry a unit suffix
(``"271um"``, ``"0.5m"``, ``"2.3mrad"``).

Example::

    scenario: fig3_scan
    bench: ../benches/airy_bench.bench
    scan: {tap: focal, diameter: 0.25mm, step: 50um, range: 2mm}
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .bench import parse_quantity
from .experiments import BlockGeometry, CountingSetup

#: section -> key -> (kind, default). Kinds: length, angle, float, int, word, path, lengths, bool.
SECTIONS = {
    "mask": {
        "x0": ("length", 271e-6),
        "a": ("float", 0.05),
        "f": ("length", 0.5),
        "wavelength": ("length", 1554.7e-9),
        "extent": ("length", 1.04e-2),
        "pixel": ("length", 10.4e-6),
        "levels": ("int", 0),
        "ramp_period": ("length", None),
        "ramp": ("word", "default"),
    },
    "scan": {
        "tap": ("word", "focal"),
        "diameter": ("length", 0.25e-3),
        "step": ("length", 50e-6),
        "range": ("length", 2e-3),
    },
    "trajectory": {
        "from_tap": ("word", "focal"),
        "planes": ("lengths", [0.0, 0.75, 1.5, 2.25, 3.0]),
        "ambiguity_db": ("float", 0.5),
        "reference_bench": ("path", None),
    },
    "block": {
        "from_tap": ("word", "focal"),
        "leg": ("length", BlockGeometry.leg),
        "z_block": ("length", BlockGeometry.z_block),
        "insertion": ("length", BlockGeometry.insertion),
        "side": ("word", BlockGeometry.side),
        "gaussian_w0": ("length", BlockGeometry.gaussian_w0),
        "mfd": ("length", BlockGeometry.mfd),
        "collimator_focal": ("length", BlockGeometry.collimator_focal),
    },
    "counting": {
        "mu": ("float", CountingSetup.mu),
        "seconds": ("float", CountingSetup.seconds),
        "rep_rate": ("float", CountingSetup.rep_rate),
        "gate_width": ("float", CountingSetup.gate_width),
        "eta_s": ("float", CountingSetup.eta_s),
        "eta_i": ("float", CountingSetup.eta_i),
        "dark_s": ("float", CountingSetup.dark_s),
        "dark_i": ("float", CountingSetup.dark_i),
        "extra_loss_db": ("float", CountingSetup.extra_loss_db),
        "drop": ("float", CountingSetup.drop),
        "drop_report": ("path", None),
        "idler_delay_gates": ("int", CountingSetup.idler_delay_gates),
        "span_gates": ("int", CountingSetup.span_gates),
        "statistics": ("word", CountingSetup.statistics),
    },
}

TOP_LEVEL = {"scenario", "command", "bench", "out_dir", "seed", *SECTIONS}


class ScenarioError(ValueError):
    """Invalid scenario document or parameter value."""


def convert(key: str, value, kind: str):
    """Coerce a YAML or command-line value to its SI representation."""
    if value is None:
        return None
    try:
        if kind in ("word", "path"):
            return str(value)
        if kind == "bool":
            if isinstance(value, bool):
                return value
            return str(value).lower() in ("1", "true", "yes", "on")
        if kind == "lengths":
            items = value if isinstance(value, (list, tuple)) else str(value).split(",")
            return [convert(key, v, "length") for v in items]
        if isinstance(value, bool):
            raise ScenarioError(f"{key}: expected a number, got {value!r}")
        if isinstance(value, (int, float)):
            number = float(value)
        else:
            text = str(value).strip()
            try:
                number = float(text)
            except ValueError:
                number = parse_quantity(text, kind if kind in ("length", "angle") else "float")
        if kind == "int":
            if number != int(number):
                raise ScenarioError(f"{key}: expected an integer, got {value!r}")
            return int(number)
        return number
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"{key}: {exc}") from exc


@dataclass
class ScenarioConfig:
    name: str = ""
    command: str | None = None
    bench: Path | None = None
    out_dir: Path | None = None
    seed: int | None = None
    sections: dict = field(default_factory=lambda: {s: {} for s in SECTIONS})
    base_dir: Path = Path(".")

    def section(self, name: str) -> dict:
        """Section values with defaults filled in."""
        spec = SECTIONS[name]
        out = {k: default for k, (_, default) in spec.items()}
        out.update(self.sections.get(name, {}))
        return out

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def block_geometry(self) -> BlockGeometry:
        s = self.section("block")
        return BlockGeometry(**{k: v for k, v in s.items() if k != "from_tap"})

    def counting_setup(self) -> CountingSetup:
        s = self.section("counting")
        return CountingSetup(**{k: v for k, v in s.items() if k != "drop_report"})

    def parameters(self) -> dict:
        """Flat ``section.key -> value`` map of every effective setting."""
        out = {"scenario": self.name, "bench": self.bench, "seed": self.seed}
        for s in SECTIONS:
            for k, v in self.section(s).items():
                out[f"{s}.{k}"] = v
        return out


def parse_scenario(doc: str, base_dir=".") -> ScenarioConfig:
    try:
        data = yaml.safe_load(doc) or {}
    except yaml.YAMLError as exc:
        raise ScenarioError(f"malformed scenario document: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("scenario document must be a mapping")
    unknown = set(data) - TOP_LEVEL
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    cfg = ScenarioConfig(base_dir=Path(base_dir))
    cfg.name = str(data.get("scenario", ""))
    cfg.command = data.get("command")
    if data.get("bench") is not None:
        cfg.bench = cfg.resolve(data["bench"])
    if data.get("out_dir") is not None:
        cfg.out_dir = cfg.resolve(data["out_dir"])
    if data.get("seed") is not None:
        cfg.seed = convert("seed", data["seed"], "int")
    for name, spec in SECTIONS.items():
        values = data.get(name) or {}
        if not isinstance(values, dict):
            raise ScenarioError(f"section {name!r} must be a mapping")
        for key, value in values.items():
            if key not in spec:
                raise ScenarioError(f"section {name!r} has no key {key!r}")
            v = convert(f"{name}.{key}", value, spec[key][0])
            if spec[key][0] == "path" and v is not None:
                v = cfg.resolve(v)
            cfg.sections[name][key] = v
    return cfg


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"scenario file not found: {path}")
    cfg = parse_scenario(path.read_text(encoding="utf-8"), base_dir=path.parent)
    if not cfg.name:
        cfg.name = path.stem
    return cfg


def validate(cfg: ScenarioConfig, needs_bench: bool = False, needs_seed: bool = False) -> None:
    """Check referenced files exist and the seed is present where required."""
    if needs_bench:
        if cfg.bench is None:
            raise ScenarioError("no bench file given (config 'bench:' or --bench)")
        if not Path(cfg.bench).is_file():
            raise ScenarioError(f"bench file not found: {cfg.bench}")
    for name, spec in SECTIONS.items():
        for key, (kind, _) in spec.items():
            value = cfg.sections[name].get(key)
            if kind == "path" and value is not None and not Path(value).is_file():
                raise ScenarioError(f"{name}.{key}: file not found: {value}")
    if needs_seed and cfg.seed is None:
        raise ScenarioError("a seed is required for counting scenarios (config 'seed:' or --seed)")
