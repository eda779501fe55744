import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airyphoton.field import (
    FieldValidationError,
    FieldVersionError,
    Grid,
    IntensityImage,
    NotAFieldFile,
    TruncatedFieldFile,
    centroid,
    new_field,
    read_field,
    read_pgm16,
    total_power,
    write_field,
    write_pgm16,
)
from airyphoton.modes import gaussian_mode


def reference_write(path, nx, ny, dx, dy, wl, amp):
    # independent writer following the documented layout: header then (re, im) f64 pairs
    data = struct.pack("<4s3I3d", b"AFLD", 1, nx, ny, dx, dy, wl)
    path.write_bytes(data + np.column_stack([amp.real.ravel(), amp.imag.ravel()]).astype("<f8").tobytes())


def test_new_field_extent():
    f = new_field(2048, 2048, 15e-6, 15e-6, 1554.7e-9)
    assert f.grid.extent == pytest.approx((0.03072, 0.03072))
    assert not f.amplitude.any()


def test_minimal_field():
    f = new_field(2, 2, 1e-6, 1e-6, 1e-6)
    assert (f.nx, f.ny) == (2, 2)


@pytest.mark.parametrize("args, name", [
    ((0, 4, 1e-6, 1e-6, 1e-6), "nx"),
    ((4, 1, 1e-6, 1e-6, 1e-6), "ny"),
    ((4, 4, 0.0, 1e-6, 1e-6), "dx"),
    ((4, 4, 1e-6, -1e-6, 1e-6), "dy"),
    ((4, 4, 1e-6, 1e-6, 0.0), "wavelength"),
])
def test_new_field_rejects_bad_metadata(args, name):
    with pytest.raises(FieldValidationError) as err:
        new_field(*args)
    assert err.value.name == name


def test_total_power_cases():
    assert total_power(new_field(4, 4, 1e-6, 1e-6, 1e-6)) == 0
    f = new_field(2, 2, 1.0, 1.0, 1e-6).replace(np.ones((2, 2)))
    assert total_power(f) == 4
    g = gaussian_mode(1e-3, Grid(512, 512, 20e-6, 20e-6, 1554.7e-9))
    assert total_power(g) == pytest.approx(1, abs=1e-9)


@given(st.floats(0, 2 * np.pi))
@settings(max_examples=25, deadline=None)
def test_total_power_unit_phase_invariance(theta):
    rng = np.random.default_rng(3)
    f = new_field(16, 12, 1e-5, 2e-5, 1e-6).replace(rng.normal(size=(12, 16)) + 1j * rng.normal(size=(12, 16)))
    p0 = total_power(f)
    assert abs(total_power(f.replace(f.amplitude * np.exp(1j * theta))) - p0) <= 1e-12 * p0


def test_centroid_of_center_sample():
    for nx, ny in [(8, 8), (7, 10)]:
        a = np.zeros((ny, nx), complex)
        a[ny // 2, nx // 2] = 1
        f = new_field(nx, ny, 1e-6, 1e-6, 1e-6).replace(a)
        assert centroid(f) == (0.0, 0.0)


shapes = st.tuples(st.integers(2, 9), st.integers(2, 9))


@given(shapes, st.floats(1e-7, 1e-2), st.floats(1e-7, 1e-2), st.floats(1e-7, 1e-5), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_round_trip_bit_exact(tmp_path_factory, shape, dx, dy, wl, seed):
    ny, nx = shape
    rng = np.random.default_rng(seed)
    amp = rng.normal(size=(ny, nx)) + 1j * rng.normal(size=(ny, nx))
    amp[0, 0] = complex(np.nextafter(0, 1), -np.inf) if seed % 7 == 0 else amp[0, 0]
    f = new_field(nx, ny, dx, dy, wl).replace(amp)
    path = tmp_path_factory.mktemp("rt") / "f.afld"
    write_field(f, path)
    g = read_field(path)
    assert (g.nx, g.ny, g.dx, g.dy, g.wavelength) == (f.nx, f.ny, f.dx, f.dy, f.wavelength)
    assert g.amplitude.tobytes() == f.amplitude.tobytes()


def test_reference_writer_parses_equal(tmp_path):
    rng = np.random.default_rng(0)
    amp = rng.normal(size=(5, 3)) + 1j * rng.normal(size=(5, 3))
    reference_write(tmp_path / "r.afld", 3, 5, 2e-6, 3e-6, 1.5547e-6, amp)
    f = read_field(tmp_path / "r.afld")
    assert (f.nx, f.ny, f.dx, f.dy, f.wavelength) == (3, 5, 2e-6, 3e-6, 1.5547e-6)
    assert np.array_equal(f.amplitude, amp)
    write_field(f, tmp_path / "w.afld")
    assert (tmp_path / "w.afld").read_bytes() == (tmp_path / "r.afld").read_bytes()


def test_file_errors(tmp_path):
    f = new_field(4, 4, 1e-6, 1e-6, 1e-6)
    write_field(f, tmp_path / "ok.afld")
    raw = (tmp_path / "ok.afld").read_bytes()
    (tmp_path / "magic.afld").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(NotAFieldFile, match="not a field file"):
        read_field(tmp_path / "magic.afld")
    (tmp_path / "short.afld").write_bytes(raw[:-1])
    with pytest.raises(TruncatedFieldFile):
        read_field(tmp_path / "short.afld")
    (tmp_path / "head.afld").write_bytes(raw[:10])
    with pytest.raises(TruncatedFieldFile):
        read_field(tmp_path / "head.afld")
    (tmp_path / "ver.afld").write_bytes(raw[:4] + struct.pack("<I", 2) + raw[8:])
    with pytest.raises(FieldVersionError):
        read_field(tmp_path / "ver.afld")


def test_field_is_immutable():
    f = new_field(4, 4, 1e-6, 1e-6, 1e-6)
    with pytest.raises(ValueError):
        f.amplitude[0, 0] = 1


def test_intensity_image_invariants():
    IntensityImage(np.array([[0.5, 1.0]]), 1e-6, "peak")
    with pytest.raises(ValueError):
        IntensityImage(np.array([[0.5, 0.9]]), 1e-6, "peak")
    with pytest.raises(ValueError):
        IntensityImage(np.array([[-0.1, 1.0]]), 1e-6)


def test_pgm_round_trip(tmp_path):
    v = np.random.default_rng(1).integers(0, 65536, size=(7, 5))
    write_pgm16(v, tmp_path / "a.pgm")
    assert np.array_equal(read_pgm16(tmp_path / "a.pgm"), v)
