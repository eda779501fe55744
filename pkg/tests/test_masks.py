from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airyphoton.bench import run_bench
from airyphoton.experiments import fidelity_to
from airyphoton.field import Field, FieldValidationError, Grid, centroid
from airyphoton.masks import (
    TWO_PI,
    MaskDesign,
    PhaseMask,
    apply_to_field,
    default_ramp,
    design_for_airy,
    read_mask,
    render,
    validate_sampling,
    write_mask,
)
from airyphoton.metrology import main_lobe, pattern_shift
from airyphoton.modes import AiryParams, airy_mode, gaussian_mode
from airyphoton.propagation import apply_lens, propagate

WL = 1554.7e-9
NOMINAL = dict(x0=271e-6, a=0.05, f=0.5, wavelength=WL, extent=1.04e-2, pixel=10.4e-6)


def ramp_only(k_ramp, pixel=10.4e-6, extent=1.04e-2):
    return MaskDesign(np.inf, k_ramp, 0.5, WL, 2e-3, extent, pixel)


def with_slm(cfg, **params):
    els = list(cfg.elements)
    i = next(i for i, e in enumerate(els) if e.kind == "slm")
    els[i] = replace(els[i], params={**els[i].params, **params})
    return cfg.with_elements(els)


def test_design_nominal_geometry():
    d = design_for_airy(**NOMINAL)
    assert d.w == pytest.approx(456.5e-6, abs=0.05e-6)
    assert d.w_g == pytest.approx(2.042e-3, abs=0.5e-6)
    assert d.x0 == pytest.approx(271e-6, rel=1e-12)
    assert d.a == pytest.approx(0.05, rel=1e-12)
    assert d.k_ramp == default_ramp(10.4e-6)
    assert not d.clipped


def test_design_scaling_and_errors():
    d1 = design_for_airy(**NOMINAL)
    d2 = design_for_airy(**{**NOMINAL, "x0": 2 * NOMINAL["x0"]})
    assert d2.w == pytest.approx(d1.w / 2, rel=1e-12)
    with pytest.raises(ValueError, match="truncation too strong"):
        design_for_airy(**{**NOMINAL, "a": 1.0})
    with pytest.raises(ValueError):
        design_for_airy(**{**NOMINAL, "pixel": 0.0})
    assert design_for_airy(**{**NOMINAL, "a": 0.005}).clipped


def test_render_degenerate_and_ramp():
    assert not render(ramp_only(0.0)).phase.any()
    pixel = 10.4e-6
    m = render(ramp_only(TWO_PI / (10 * pixel), extent=100 * pixel, pixel=pixel))
    unwrapped = np.unwrap(m.phase[0])
    assert np.allclose(np.diff(unwrapped), TWO_PI / 10, atol=1e-9)
    assert np.allclose(unwrapped[10:] - unwrapped[:-10], TWO_PI, atol=1e-9)


def test_render_matches_direct_evaluation():
    d = design_for_airy(**NOMINAL)
    m = render(d)
    n = d.npix
    assert m.phase.shape == (n, n) == (1000, 1000)
    rng = np.random.default_rng(5)
    for i, j in rng.integers(0, n, size=(200, 2)):
        u = (i + 0.5 - n / 2) * d.pixel
        v = (j + 0.5 - n / 2) * d.pixel
        phi = -(u * u * u + v * v * v) / (3 * d.w**3) + d.k_ramp * u
        assert m.phase[j, i] == phi % TWO_PI


@given(st.sampled_from([2, 3, 4, 8, 16, 256]))
@settings(max_examples=6, deadline=None)
def test_quantized_levels_exact(levels):
    m = render(design_for_airy(**{**NOMINAL, "extent": 1e-3}), levels)
    step = TWO_PI / levels
    assert np.array_equal(m.phase, np.round(m.phase / step) * step)
    assert m.phase.min() >= 0 and m.phase.max() < TWO_PI


def test_phase_mask_invariants():
    with pytest.raises(ValueError):
        PhaseMask(np.full((2, 2), TWO_PI), 1e-6)
    with pytest.raises(ValueError):
        render(ramp_only(0.0), levels=1)


def test_validate_sampling_examples():
    r = validate_sampling(design_for_airy(**NOMINAL, k_ramp=0.0))
    assert r.nu_max == pytest.approx(2.84e5, rel=2e-3)
    assert r.limit == pytest.approx(3.02e5, rel=2e-3)
    assert not r.aliased
    assert "not aliased" in r.describe()
    r0 = validate_sampling(ramp_only(0.0))
    assert r0.nu_max == 0 and not r0.aliased
    assert validate_sampling(design_for_airy(**{**NOMINAL, "pixel": 20.8e-6})).aliased
    # the default blazed ramp partly cancels the cubic gradient along x
    assert not validate_sampling(design_for_airy(**NOMINAL)).aliased


def test_apply_to_field_cases():
    g = Grid(256, 256, 20e-6, 20e-6, WL)
    f = Field(np.ones((256, 256)), g.dx, g.dy, WL)
    zero = PhaseMask(np.zeros((100, 100)), 20e-6)
    out = apply_to_field(f, zero)
    idx = np.arange(256)
    band = (idx >= 128 - 50) & (idx < 128 + 50)  # 100 mask pixels of one field pitch each
    inside = band[None, :] & band[:, None]
    assert np.array_equal(out.amplitude, np.where(inside, 1, 0))
    pi_mask = PhaseMask(np.full((100, 100), np.pi), 20e-6)
    assert np.allclose(apply_to_field(f, pi_mask).amplitude[inside], -1, atol=1e-15)
    with pytest.raises(FieldValidationError):
        apply_to_field(f, PhaseMask(np.zeros((300, 300)), 20e-6))


def test_mask_file_round_trip(tmp_path):
    for levels in (0, 8):
        m = render(design_for_airy(**{**NOMINAL, "extent": 1e-3}), levels)
        meta = write_mask(m, tmp_path / f"m{levels}.pgm")
        assert "x0" in meta.read_text()
        r = read_mask(tmp_path / f"m{levels}.pgm")
        assert r.levels == levels and r.pitch == m.pitch
        assert r.design == m.design
        tol = 0 if levels else TWO_PI / 65536
        assert np.max(np.abs(np.angle(np.exp(1j * (r.phase - m.phase))))) <= tol + 1e-12


def test_pure_ramp_spot_position():
    # Gaussian through a pure 32-pixel ramp in the 2f geometry lands at f lambda k / (2 pi)
    g = Grid(2048, 2048, 15e-6, 15e-6, WL)
    k_ramp = TWO_PI / (32 * 10.4e-6)
    m = render(ramp_only(k_ramp))
    f = propagate(apply_lens(propagate(apply_to_field(gaussian_mode(2.04e-3, g), m), 0.5), 0.5), 0.5)
    expected = 0.5 * WL * k_ramp / TWO_PI
    assert abs(centroid(f)[0] - expected) <= g.dx


def test_ramp_shifts_airy_pattern(airy_bench, airy_taps):
    period = 32 * 10.4e-6
    shifted = run_bench(with_slm(airy_bench, ramp_period=period))[0].field
    base = airy_taps["focal"].field
    moved = pattern_shift(shifted.intensity().sum(axis=0), base.intensity().sum(axis=0), base.dx)
    assert abs(moved - 0.5 * WL / period) <= airy_bench.grid.dx


@pytest.mark.slow
def test_quantization_and_aliasing_fidelity(airy_bench, airy_taps):
    ref = airy_mode(AiryParams(271e-6, 271e-6, 0.05), airy_bench.grid)
    fid = {}
    for name, params in {"L8": {"levels": 8}, "L256": {"levels": 256}, "px20.8": {"pixel": 20.8e-6}}.items():
        fid[name] = fidelity_to(run_bench(with_slm(airy_bench, **params))[0].field, ref, search=2)[0]
    assert fid["L256"] >= fid["L8"]
    assert fid["L256"] >= 0.98
    assert fid["px20.8"] < 0.98


@pytest.mark.slow
def test_mask_translation_steers_beam(airy_bench):
    """Shifting the mask by d in the front focal plane tilts the output by -d/f.

    Relative to the fixed illumination, the shifted cubic (u - d)**3 also adds a
    linear term -d**2 u / w**3, common to +-d, which moves the focal lobe by
    -f lambda d**2 / (2 pi w**3), and a defocus term that is odd in d.
    """
    delta, z, f = 0.2e-3, 2.0, 0.5
    lobes = {}
    for d in (delta, -delta):
        cfg = with_slm(airy_bench, offset_x=d)
        focal = run_bench(cfg.with_elements(cfg.elements[:6]))[0].field
        lobes[d] = (main_lobe(focal)[0], main_lobe(propagate(focal, z))[0])
    focal0 = run_bench(airy_bench.with_elements(airy_bench.elements[:6]))[0].field
    x0_focal = main_lobe(focal0)[0]
    w = design_for_airy(**NOMINAL).w
    common = (lobes[delta][0] + lobes[-delta][0]) / 2 - x0_focal
    assert common == pytest.approx(-f * WL * delta**2 / (TWO_PI * w**3), abs=airy_bench.grid.dx)
    steer = (lobes[delta][1] - lobes[-delta][1]) - (lobes[delta][0] - lobes[-delta][0])
    assert steer == pytest.approx(-z * 2 * delta / f, rel=0.05)
