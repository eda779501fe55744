"""Gated photon-pair counting: source and channel model, Monte Carlo, histograms, CAR.

Per gate the source emits ``n`` pairs (Poisson or thermal with mean ``mu``);
each photon reaches its detector with probability ``eta``; each detector
also fires on a dark count with probability ``dark_rate * gate_width``.
Detectors are binary, so a gate yields one boolean per arm.

Gates are independent, so a run is fully described by the joint click
probabilities of one gate. :func:`simulate_counts` draws the clicked gates
directly (geometric gaps between gates with any click, then a category for
each) instead of visiting every gate; the result has exactly the per-gate
distribution above while staying cheap for 10**10-gate runs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

#: Off-center histogram bins used as the accidental reference, by |delay|.
ACCIDENTAL_BINS = (2, 11)

#: Gates processed per independently seeded sub-stream.
BLOCK_GATES = 1 << 26


@dataclass(frozen=True)
class SourceParams:
    mu: float
    n_gates: int
    rep_rate: float = 10e6
    gate_width: float = 1e-9
    statistics: str = "poisson"

    def __post_init__(self):
        if not 0 <= self.mu <= 0.5:
            raise ValueError(f"mean pairs per gate must lie in [0, 0.5], got {self.mu}")
        if self.rep_rate <= 0 or self.gate_width <= 0:
            raise ValueError("rep_rate and gate_width must be positive")
        if self.n_gates < 1 or int(self.n_gates) != self.n_gates:
            raise ValueError(f"n_gates must be a positive integer, got {self.n_gates}")
        if self.statistics not in ("poisson", "thermal"):
            raise ValueError(f"unknown pair statistics {self.statistics!r}")
        object.__setattr__(self, "n_gates", int(self.n_gates))

    @classmethod
    def for_integration(cls, mu: float, seconds: float, rep_rate: float = 10e6, **kw) -> "SourceParams":
        return cls(mu, int(round(seconds * rep_rate)), rep_rate, **kw)

    @property
    def period(self) -> float:
        return 1 / self.rep_rate


@dataclass(frozen=True)
class ChannelParams:
    eta_s: float
    eta_i: float
    dark_s: float = 100.0
    dark_i: float = 100.0
    idler_delay_gates: int = 0

    def __post_init__(self):
        for name in ("eta_s", "eta_i"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if self.dark_s < 0 or self.dark_i < 0:
            raise ValueError("dark count rates must be nonnegative")


def dark_probabilities(src: SourceParams, ch: ChannelParams) -> tuple[float, float]:
    ds, di = ch.dark_s * src.gate_width, ch.dark_i * src.gate_width
    if ds > 1 or di > 1:
        raise ValueError("dark count probability per gate exceeds 1")
    return ds, di


def _no_click_photons(src, x):
    # probability generating function of the pair number at 1 - x
    if src.statistics == "thermal":
        return 1 / (1 + src.mu * x)
    return math.exp(-src.mu * x)


def gate_probabilities(src: SourceParams, ch: ChannelParams) -> tuple[float, float, float, float]:
    """Exact per-gate probabilities ``(both, signal only, idler only, neither)``."""
    ds, di = dark_probabilities(src, ch)
    g_s = _no_click_photons(src, ch.eta_s)
    g_i = _no_click_photons(src, ch.eta_i)
    g_si = _no_click_photons(src, ch.eta_s + ch.eta_i - ch.eta_s * ch.eta_i)
    q_s, q_i, q_si = (1 - ds) * g_s, (1 - di) * g_i, (1 - ds) * (1 - di) * g_si
    p11 = 1 - q_s - q_i + q_si
    p10 = q_i - q_si
    p01 = q_s - q_si
    return max(p11, 0.0), max(p10, 0.0), max(p01, 0.0), q_si


def analytic_car(src: SourceParams, ch: ChannelParams) -> float:
    """Leading-order CAR ``1 + mu eta_s eta_i / ((mu eta_s + d_s)(mu eta_i + d_i))``."""
    ds, di = dark_probabilities(src, ch)
    rs, ri = src.mu * ch.eta_s + ds, src.mu * ch.eta_i + di
    if rs == 0 or ri == 0:
        raise ValueError("CAR is undefined: an arm has neither signal nor dark counts")
    return 1 + src.mu * ch.eta_s * ch.eta_i / (rs * ri)


def exact_car(src: SourceParams, ch: ChannelParams) -> float:
    """Ratio of true to accidental coincidence probability under the full gate model."""
    p11, p10, p01, _ = gate_probabilities(src, ch)
    ps, pi = p11 + p10, p11 + p01
    if ps == 0 or pi == 0:
        raise ValueError("CAR is undefined: an arm never clicks")
    return p11 / (ps * pi)


@dataclass(frozen=True, eq=False)
class ClickStream:
    """Per-gate binary detector record stored as the sorted indices of clicked gates."""

    n_gates: int
    gates: np.ndarray
    period: float = 1e-7

    @property
    def count(self) -> int:
        return int(self.gates.size)

    def to_bool(self) -> np.ndarray:
        out = np.zeros(self.n_gates, dtype=bool)
        out[self.gates] = True
        return out

    @classmethod
    def from_bool(cls, clicks, period: float = 1e-7) -> "ClickStream":
        clicks = np.asarray(clicks, dtype=bool)
        return cls(clicks.size, np.flatnonzero(clicks).astype(np.int64), period)


def _clicked_gates(rng, size, p):
    if p <= 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1:
        return np.arange(size, dtype=np.int64)
    mean = size * p
    chunks, last = [], -1
    while True:
        n = int(mean + 6 * math.sqrt(mean) + 16)
        pos = last + np.cumsum(rng.geometric(p, n), dtype=np.int64)
        chunks.append(pos)
        last = int(pos[-1])
        if last >= size:
            break
    pos = np.concatenate(chunks)
    return pos[pos < size]


def simulate_counts(src: SourceParams, ch: ChannelParams, seed: int, block_gates: int = BLOCK_GATES):
    """Monte Carlo signal and idler click streams; deterministic for a fixed seed.

    Gates are split into blocks of ``block_gates``; block ``b`` draws from
    ``SeedSequence(seed, spawn_key=(b,))`` so blocks are independent and can
    be generated in any order. Idler clicks are recorded ``idler_delay_gates``
    later than their gate; clicks pushed past the end of the run are lost.
    """
    p11, p10, p01, _ = gate_probabilities(src, ch)
    p_any = p11 + p10 + p01
    sig, idl = [], []
    for b, start in enumerate(range(0, src.n_gates, block_gates)):
        size = min(block_gates, src.n_gates - start)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        gates = _clicked_gates(rng, size, p_any)
        u = rng.random(gates.size) * p_any
        sig.append(start + gates[u < p11 + p10])
        idl.append(start + gates[(u < p11) | (u >= p11 + p10)])
    s = np.concatenate(sig) if sig else np.empty(0, np.int64)
    i = np.concatenate(idl) if idl else np.empty(0, np.int64)
    i = i + ch.idler_delay_gates
    i = i[(i >= 0) & (i < src.n_gates)]
    return ClickStream(src.n_gates, s, src.period), ClickStream(src.n_gates, i, src.period)


@dataclass(frozen=True, eq=False)
class CoincidenceHistogram:
    """Coincidences versus relative delay; ``delays[k] == 0`` is the physical pairing."""

    bin_width: float
    delays: np.ndarray
    counts: np.ndarray
    n_gates: int
    idler_delay_gates: int = 0

    @property
    def span(self) -> int:
        return int(self.delays[-1])

    def at(self, delay: int) -> int:
        return int(self.counts[delay + self.span])


def coincidence_histogram(s: ClickStream, i: ClickStream, idler_delay_gates: int, span_gates: int) -> CoincidenceHistogram:
    """``counts[r] = sum_g s[g] * i[g + idler_delay_gates + r]`` for ``|r| <= span_gates``."""
    if s.n_gates != i.n_gates:
        raise ValueError(f"stream lengths differ: {s.n_gates} vs {i.n_gates}")
    if span_gates < 0 or 2 * span_gates + 1 > s.n_gates or span_gates + abs(idler_delay_gates) >= s.n_gates:
        raise ValueError(f"histogram span {span_gates} (delay {idler_delay_gates}) exceeds the {s.n_gates}-gate stream")
    target = s.gates + idler_delay_gates
    lo = np.searchsorted(i.gates, target - span_gates, side="left")
    hi = np.searchsorted(i.gates, target + span_gates, side="right")
    n = hi - lo
    owner = np.repeat(np.arange(target.size), n)
    first = np.repeat(lo - np.cumsum(n) + n, n)
    partner = first + np.arange(owner.size)
    r = i.gates[partner] - target[owner]
    counts = np.bincount(r + span_gates, minlength=2 * span_gates + 1)
    delays = np.arange(-span_gates, span_gates + 1)
    return CoincidenceHistogram(s.period, delays, counts.astype(np.int64), s.n_gates, idler_delay_gates)


class NoAccidentalsError(ValueError):
    pass


def car_from_histogram(h: CoincidenceHistogram, accidental_bins=ACCIDENTAL_BINS) -> tuple[float, float]:
    """CAR and its Poisson error from the center bin and off-center accidental bins.

    ``car = C / mean(A)``, ``sigma = car * sqrt(1/C + 1/sum(A))`` written in a
    form that stays finite at ``C = 0``.
    """
    lo, hi = accidental_bins
    sel = (np.abs(h.delays) >= lo) & (np.abs(h.delays) <= hi)
    if sel.sum() < 5:
        raise ValueError(f"need at least 5 off-center bins with {lo} <= |delay| <= {hi}, histogram has {int(sel.sum())}")
    acc = h.counts[sel]
    total_acc = float(acc.sum())
    if total_acc == 0:
        raise NoAccidentalsError("no accidentals measured")
    mean_acc = total_acc / acc.size
    c = float(h.at(0))
    car = c / mean_acc
    sigma = math.sqrt(c + c * c / total_acc) / mean_acc
    return car, sigma


def arm_transmission(drop_report=None, base_loss_db: float = 0.0, coupling: float = 1.0, det_eff: float = 1.0) -> float:
    """End-to-end arm transmission ``10**(-loss/10) * coupling * det_eff * (1 - drop)``.

    ``drop_report`` may be a :class:`~airyphoton.metrology.DropReport`, a bare
    drop fraction, or ``None``.
    """
    drop = 0.0 if drop_report is None else float(getattr(drop_report, "drop", drop_report))
    if not 0 <= coupling <= 1 or not 0 <= det_eff <= 1 or not drop <= 1:
        raise ValueError("coupling and det_eff must lie in [0, 1] and drop <= 1")
    return 10 ** (-base_loss_db / 10) * coupling * det_eff * (1 - drop)


def write_histogram_csv(h: CoincidenceHistogram, path, header: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        meta = {"bin_width_s": h.bin_width, "n_gates": h.n_gates, "idler_delay_gates": h.idler_delay_gates, **(header or {})}
        for key, value in meta.items():
            fh.write(f"# {key} = {value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delay_gates", "counts"])
        for d, c in zip(h.delays, h.counts):
            w.writerow([int(d), int(c)])


def write_manifest(path, values: dict) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in values.items()))


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line and not line.startswith("#"):
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out
