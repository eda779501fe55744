"""Command-line and scenario-file behavior, on small benches so each command runs in seconds."""

from pathlib import Path

import numpy as np
import pytest

from airyphoton.cli import main
from airyphoton.counting import read_manifest
from airyphoton.metrology import DropReport, read_csv_table
from airyphoton.scenarios import ScenarioError, convert, load_scenario, parse_scenario, validate

from conftest import SCENARIOS

SMALL_AIRY = """grid nx=512 ny=512 dx=20um wavelength=1554.7nm guard=off
source airy x0=271um a=0.05
tap focal
propagate z=0.5m
tap far
"""


@pytest.fixture
def small_bench(tmp_path):
    p = tmp_path / "small.bench"
    p.write_text(SMALL_AIRY)
    return p


def only_run(root: Path) -> Path:
    runs = [p for p in root.iterdir() if p.is_dir()]
    assert len(runs) == 1
    return runs[0]


def csv_body(path: Path) -> str:
    return "".join(line for line in path.read_text().splitlines(True) if not line.startswith("#"))


# --- scenarios -------------------------------------------------------------------

def test_shipped_scenarios_load_and_validate():
    names = sorted(p.stem for p in SCENARIOS.glob("*.yaml"))
    assert names == ["fig2_airy", "fig2_unmodulated", "fig3_scan", "fig4_block_trajectory"]
    for p in SCENARIOS.glob("*.yaml"):
        cfg = load_scenario(p)
        validate(cfg, needs_bench=cfg.bench is not None, needs_seed=bool(cfg.sections["counting"]))
    scan = load_scenario(SCENARIOS / "fig3_scan.yaml")
    assert scan.section("scan")["step"] == 50e-6 and scan.section("scan")["range"] == 2e-3
    assert scan.bench.is_file()


def test_convert_units_and_errors():
    assert convert("x", "271um", "length") == 271e-6
    assert convert("x", 0.5, "length") == 0.5
    assert convert("x", "2.3mrad", "angle") == pytest.approx(2.3e-3)
    assert convert("x", "3", "int") == 3
    assert convert("x", ["0m", "750mm"], "lengths") == [0.0, 0.75]
    for value, kind in [("3.5", "int"), ("abc", "length"), (True, "float")]:
        with pytest.raises(ScenarioError):
            convert("x", value, kind)


def test_scenario_document_errors(tmp_path):
    with pytest.raises(ScenarioError, match="unknown"):
        parse_scenario("scenario: a\nwibble: 1\n")
    with pytest.raises(ScenarioError, match="no key"):
        parse_scenario("scan: {width: 1}\n")
    with pytest.raises(ScenarioError, match="mapping"):
        parse_scenario("- 1\n- 2\n")
    with pytest.raises(ScenarioError, match="malformed"):
        parse_scenario("scan: {a: [1,\n")
    with pytest.raises(ScenarioError, match="seed"):
        validate(parse_scenario("counting: {mu: 0.01}\n"), needs_seed=True)
    with pytest.raises(ScenarioError, match="not found"):
        validate(parse_scenario("bench: nowhere.bench\n", base_dir=tmp_path), needs_bench=True)
    with pytest.raises(ScenarioError, match="not found"):
        load_scenario(tmp_path / "missing.yaml")


# --- mask --------------------------------------------------------------------------

def test_mask_command(tmp_path, capsys):
    assert main(["mask", "--x0", "271um", "--a", "0.05", "--f", "0.5m", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "not aliased" in out
    run = only_run(tmp_path)
    assert (run / "mask.pgm").read_bytes().startswith(b"P5")
    manifest = read_manifest(run / "manifest.txt")
    assert manifest["mask.x0"] == repr(271e-6) and manifest["result.aliased"] == "False"


def test_mask_refuses_aliasing(tmp_path, capsys):
    assert main(["mask", "--pixel", "20.8um", "--out", str(tmp_path)]) == 2
    assert "alias" in capsys.readouterr().err
    assert not any(tmp_path.iterdir())
    assert main(["mask", "--pixel", "20.8um", "--force", "--out", str(tmp_path)]) == 0


def test_mask_rejects_bad_truncation(tmp_path, capsys):
    assert main(["mask", "--a", "1.0", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


# --- bench -------------------------------------------------------------------------

def test_bench_command(tmp_path, small_bench):
    assert main(["bench", "--bench", str(small_bench), "--out", str(tmp_path)]) == 0
    run = only_run(tmp_path)
    for label in ("focal", "far"):
        assert (run / f"{label}.afld").is_file() and (run / f"{label}.pgm").is_file()
    rows = (run / "summary.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[0].startswith("label,z_m")


@pytest.mark.parametrize("doc, match", [("", "empty"), ("grid nx=64 ny=64 dx=10um wavelength=1um\ntap t\n", "source")])
def test_bench_command_parse_errors(tmp_path, capsys, doc, match):
    p = tmp_path / "bad.bench"
    p.write_text(doc)
    assert main(["bench", "--bench", str(p), "--out", str(tmp_path / "o")]) == 2
    assert match in capsys.readouterr().err.lower()


def test_bench_guard_failure_is_runtime_error(tmp_path):
    p = tmp_path / "wide.bench"
    p.write_text("grid nx=64 ny=64 dx=10um wavelength=1554.7nm guard=1e-6\nsource gaussian w0=0.2mm\n"
                 "propagate z=1m\ntap end\n")
    assert main(["bench", "--bench", str(p), "--out", str(tmp_path / "o")]) == 3


# --- scan / trajectory / block ------------------------------------------------------

def test_scan_command_41_points(tmp_path, small_bench):
    args = ["scan", "--bench", str(small_bench), "--tap", "focal", "--diameter", "0.25mm", "--step", "50um",
            "--range", "2mm", "--out", str(tmp_path)]
    assert main(args) == 0
    meta, table = read_csv_table(only_run(tmp_path) / "scan.csv")
    assert table.shape == (41, 2)
    assert float(meta["scan.step"]) == 50e-6 and float(meta["fwhm_m"]) > 0


def test_trajectory_command(tmp_path, small_bench, capsys):
    args = ["trajectory", "--bench", str(small_bench), "--planes", "0m,0.25m,0.5m,0.75m,1m", "--out", str(tmp_path)]
    assert main(args) == 0
    meta, table = read_csv_table(only_run(tmp_path) / "trajectory.csv")
    assert table.shape[0] == 5
    assert float(meta["c2_per_m"]) > 0
    assert "ballistic" in capsys.readouterr().out


def test_block_command_writes_drop_reports(tmp_path, small_bench):
    args = ["block", "--bench", str(small_bench), "--leg", "1m", "--z-block", "0.5m", "--insertion", "0.5mm",
            "--out", str(tmp_path)]
    assert main(args) == 0
    run = only_run(tmp_path)
    airy = DropReport.from_text((run / "airy_drop.txt").read_text())
    gauss = DropReport.from_text((run / "gaussian_drop.txt").read_text())
    assert 0 <= airy.drop <= 1 and 0 <= gauss.drop <= 1
    assert "# edge_x" in (run / "airy_drop.txt").read_text()


# --- coincidence ------------------------------------------------------------------

COUNT = ["--mu", "0.02", "--seconds", "0.2", "--eta-s", "0.3", "--eta-i", "0.3"]


def test_coincidence_requires_seed(tmp_path, capsys):
    assert main(["coincidence", *COUNT, "--out", str(tmp_path)]) == 2
    assert "seed" in capsys.readouterr().err


def test_coincidence_zero_mu_is_an_error(tmp_path, capsys):
    args = ["coincidence", "--mu", "0", "--dark-s", "0", "--dark-i", "0", "--seed", "1", "--out", str(tmp_path)]
    assert main(args) == 2
    assert "undefined" in capsys.readouterr().err


def test_coincidence_reproducible_and_documented(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["coincidence", *COUNT, "--seed", "9", "--out", str(a)]) == 0
    assert main(["coincidence", *COUNT, "--seed", "9", "--out", str(b)]) == 0
    ha, hb = only_run(a) / "histogram.csv", only_run(b) / "histogram.csv"
    assert ha.read_bytes() == hb.read_bytes()
    text = ha.read_text()
    for key in ("# seed = 9", "# mu = 0.02", "# eta_s = 0.3", "# car = "):
        assert key in text
    car = dict(line.split(" = ") for line in (only_run(a) / "car.txt").read_text().splitlines())
    assert float(car["car"]) > 1


def test_coincidence_consumes_drop_report(tmp_path):
    report = tmp_path / "drop.txt"
    report.write_text(DropReport(0.5, 1.0, 0.5, "fiber").to_text())
    base = ["coincidence", *COUNT, "--seed", "3", "--dark-s", "0", "--dark-i", "0"]
    assert main([*base, "--out", str(tmp_path / "open")]) == 0
    assert main([*base, "--drop-report", str(report), "--out", str(tmp_path / "blk")]) == 0
    c_open = int(read_manifest(only_run(tmp_path / "open") / "manifest.txt")["result.coincidences"])
    c_blk = int(read_manifest(only_run(tmp_path / "blk") / "manifest.txt")["result.coincidences"])
    assert abs(c_blk / c_open - 0.5) < 5 * np.sqrt(0.5 / c_open) + 0.02


def test_output_root_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(f"scenario: prec\nseed: 1\nout_dir: {tmp_path / 'from_config'}\n"
                   "counting: {mu: 0.02, seconds: 0.05, eta_s: 0.3, eta_i: 0.3}\n")
    assert main(["coincidence", "--config", str(cfg)]) == 0
    assert only_run(tmp_path / "from_config").name.endswith("-prec")
    monkeypatch.setenv("AIRY_OUT", str(tmp_path / "from_env"))
    assert main(["coincidence", "--config", str(cfg)]) == 0
    assert only_run(tmp_path / "from_env").is_dir()
    assert main(["coincidence", "--config", str(cfg), "--out", str(tmp_path / "from_flag")]) == 0
    assert only_run(tmp_path / "from_flag").is_dir()


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text("seed: 4\ncounting: {mu: 0.02, seconds: 0.05, eta_s: 0.3, eta_i: 0.3}\n")
    assert main(["coincidence", "--config", str(cfg), "--mu", "0.01", "--seed", "5", "--out", str(tmp_path / "o")]) == 0
    m = read_manifest(only_run(tmp_path / "o") / "manifest.txt")
    assert m["counting.mu"] == "0.01" and m["seed"] == "5" and m["counting.eta_s"] == "0.3"


def test_unknown_config_key_exits_2(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text("seed: 4\ncounting: {muu: 0.02}\n")
    assert main(["coincidence", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
