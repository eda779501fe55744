"""Experiment recipes shared by the command line, scripts and acceptance tests.

Each recipe takes a parsed bench plus a small parameter dataclass and returns
plain result objects; nothing here writes files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bench import BenchConfig, Element, run_bench
from .counting import (
    ChannelParams,
    CoincidenceHistogram,
    SourceParams,
    analytic_car,
    arm_transmission,
    car_from_histogram,
    coincidence_histogram,
    exact_car,
    simulate_counts,
)
from .field import Field
from .metrology import (
    AMBIGUITY_DB,
    COLLIMATOR_FOCAL,
    DropReport,
    FiberCollector,
    ScanResult,
    TrajectoryFit,
    block_experiment,
    main_lobe,
    peak_trajectory,
    pinhole_scan,
)
from .modes import SMF28_MFD
from .propagation import propagate


def _tap_index(cfg: BenchConfig, tap: str | None) -> int:
    taps = [i for i, e in enumerate(cfg.elements) if e.kind == "tap"]
    if not taps:
        raise ValueError("bench has no tap")
    if tap is None:
        return taps[0]
    for i in taps:
        if cfg.elements[i].label == tap:
            return i
    raise ValueError(f"bench has no tap {tap!r} (taps: {cfg.taps})")


def field_at_tap(cfg: BenchConfig, tap: str | None = None) -> Field:
    """Run the bench only as far as ``tap`` (default: the first tap)."""
    i = _tap_index(cfg, tap)
    return run_bench(cfg.with_elements(cfg.elements[: i + 1]))[-1].field


def trajectory_taps(start: Field, planes, cfg: BenchConfig) -> list[tuple[float, Field]]:
    """Fields at increasing distances ``planes`` (m) beyond ``start``."""
    planes = [float(z) for z in planes]
    if any(b < a for a, b in zip(planes, planes[1:])) or planes[0] < 0:
        raise ValueError(f"trajectory planes must be nonnegative and increasing, got {planes}")
    out, f, z = [], start, 0.0
    for zp in planes:
        f = propagate(f, zp - z, method=cfg.method, guard=cfg.guard)
        z = zp
        out.append((zp, f))
    return out


def trajectory(cfg: BenchConfig, planes, from_tap: str | None = None, ambiguity_db: float = AMBIGUITY_DB):
    taps = trajectory_taps(field_at_tap(cfg, from_tap), planes, cfg)
    return peak_trajectory(taps, ambiguity_db), taps


def main_lobe_scan(f: Field, diameter: float, step: float, range_: float, plane: str = "") -> ScanResult:
    """Pinhole line scan through the main-lobe row, centered on the main lobe."""
    xc, yc = main_lobe(f)
    return pinhole_scan(f, diameter, step, range_, axis_y=yc, center_x=xc, plane=plane)


@dataclass(frozen=True)
class BlockGeometry:
    """Obstacle and collector placement for the block comparison.

    The block is a half-plane ``z_block`` beyond the start plane that covers
    the Gaussian reference axis by ``insertion``. Both arms are collected by
    the same fiber coupler, aligned on the Airy main lobe at the end of the
    ``leg``; the Gaussian reference is launched along that coupler's axis.
    """

    leg: float = 3.0
    z_block: float = 1.5
    insertion: float = 1.2e-3
    side: str = "right"
    gaussian_w0: float = 1e-3
    mfd: float = SMF28_MFD
    collimator_focal: float = COLLIMATOR_FOCAL

    def __post_init__(self):
        if not 0 < self.z_block < self.leg:
            raise ValueError(f"block must sit inside the leg: 0 < {self.z_block} < {self.leg}")
        if self.side not in ("left", "right"):
            raise ValueError("block side must be 'left' or 'right'")


@dataclass(frozen=True, eq=False)
class BlockSetup:
    airy: BenchConfig
    gaussian: BenchConfig
    start: Field
    collector: FiberCollector
    edge: float
    lobe_start: tuple
    lobe_end: tuple
    tilt: tuple


def _leg(cfg, source, geom, edge):
    els = (
        source,
        Element("propagate", {"z": geom.z_block}),
        Element("block", {"edge": edge, "side": geom.side}),
        Element("propagate", {"z": geom.leg - geom.z_block}),
        Element("tap", {}, 0, "collector"),
    )
    return cfg.with_elements(els)


def block_setup(cfg: BenchConfig, geom: BlockGeometry = BlockGeometry(), from_tap: str | None = "focal") -> BlockSetup:
    start = field_at_tap(cfg, from_tap)
    end = propagate(start, geom.leg, method=cfg.method, guard=cfg.guard)
    x0, y0 = main_lobe(start)
    x1, y1 = main_lobe(end)
    tilt = ((x1 - x0) / geom.leg, (y1 - y0) / geom.leg)
    axis_at_block = x0 + tilt[0] * geom.z_block
    edge = axis_at_block - geom.insertion if geom.side == "right" else axis_at_block + geom.insertion
    gauss_src = Element("source", {"w0": geom.gaussian_w0, "x": x0, "y": y0, "tilt_x": tilt[0], "tilt_y": tilt[1]}, 0, "gaussian")
    airy_src = Element("source", {}, 0, "plane")  # replaced by ``start``
    collector = FiberCollector((x1, y1), tilt, geom.mfd, geom.collimator_focal)
    return BlockSetup(_leg(cfg, airy_src, geom, edge), _leg(cfg, gauss_src, geom, edge), start, collector, edge,
                      (x0, y0), (x1, y1), tilt)


def run_block(setup: BlockSetup) -> tuple[DropReport, DropReport]:
    """``(airy, gaussian)`` drop reports for the shared block and coupler."""
    airy = block_experiment(setup.airy, setup.collector, start=setup.start)
    gauss = block_experiment(setup.gaussian, setup.collector)
    return airy, gauss


@dataclass(frozen=True)
class CountingSetup:
    """Pair source and detection chain for one coincidence run.

    ``eta_s``/``eta_i`` are the arm transmissions before any extra loss;
    ``extra_loss_db`` and ``drop`` act on the signal arm only.
    """

    mu: float = 1 / 69
    seconds: float = 3600.0
    rep_rate: float = 10e6
    gate_width: float = 1e-9
    eta_s: float = 0.05
    eta_i: float = 0.01
    dark_s: float = 100.0
    dark_i: float = 100.0
    extra_loss_db: float = 0.0
    drop: float = 0.0
    idler_delay_gates: int = 0
    span_gates: int = 11
    statistics: str = "poisson"

    def source(self) -> SourceParams:
        return SourceParams.for_integration(self.mu, self.seconds, self.rep_rate,
                                            gate_width=self.gate_width, statistics=self.statistics)

    def channel(self) -> ChannelParams:
        eta_s = self.eta_s * arm_transmission(self.drop, self.extra_loss_db)
        return ChannelParams(eta_s, self.eta_i, self.dark_s, self.dark_i, self.idler_delay_gates)


@dataclass(frozen=True, eq=False)
class CoincidenceResult:
    histogram: CoincidenceHistogram
    car: float
    sigma: float
    analytic: float
    exact: float
    singles_s: int
    singles_i: int
    params: dict = field(default_factory=dict)

    @property
    def coincidences(self) -> int:
        return self.histogram.at(0)


def run_coincidence(setup: CountingSetup, seed: int) -> CoincidenceResult:
    src, ch = setup.source(), setup.channel()
    analytic, exact = analytic_car(src, ch), exact_car(src, ch)  # raises early when CAR is undefined
    s, i = simulate_counts(src, ch, seed)
    h = coincidence_histogram(s, i, setup.idler_delay_gates, setup.span_gates)
    car, sigma = car_from_histogram(h)
    params = {**{k: getattr(setup, k) for k in setup.__dataclass_fields__}, "seed": seed,
              "n_gates": src.n_gates, "eta_s_effective": ch.eta_s}
    return CoincidenceResult(h, car, sigma, analytic, exact, s.count, i.count, params)


def fidelity_to(f: Field, reference: Field, search: int = 4) -> tuple[float, tuple[int, int]]:
    """Best normalized overlap of ``f`` with integer-pixel shifts of ``reference``.

    The shift search spans ``+-search`` samples around the offset between the
    two intensity peaks.
    """
    from .metrology import coupling_efficiency

    Ia, Ib = f.intensity(), reference.intensity()
    pa = np.unravel_index(np.argmax(Ia), Ia.shape)
    pb = np.unravel_index(np.argmax(Ib), Ib.shape)
    base = (pa[0] - pb[0], pa[1] - pb[1])
    best, arg = -1.0, (0, 0)
    for sy in range(base[0] - search, base[0] + search + 1):
        for sx in range(base[1] - search, base[1] + search + 1):
            shifted = reference.replace(np.roll(reference.amplitude, (sy, sx), axis=(0, 1)))
            eta = coupling_efficiency(f, shifted)
            if eta > best:
                best, arg = eta, (sx, sy)
    return best, arg
