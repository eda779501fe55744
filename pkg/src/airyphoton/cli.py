"""``airyphoton`` command line: mask, bench, scan, trajectory, block, coincidence.

Every command accepts ``--config scenario.yaml``; flags mirror the config
keys of the command's section and override the file. Artifacts go to a fresh
timestamped directory under the output root (``--out``, else ``$AIRY_OUT``,
else the config's ``out_dir``, else ``./runs``) together with a
``manifest.txt`` listing the parameters, seed, results and files.

Exit codes: 0 success, 2 invalid input or configuration, 3 runtime or
numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchElementError, BenchParseError, load_bench, run_bench, write_taps
from .counting import write_histogram_csv, write_manifest
from .experiments import block_setup, main_lobe_scan, field_at_tap, run_block, run_coincidence, trajectory
from .field import FieldValidationError, total_power
from .masks import TWO_PI, design_for_airy, render, validate_sampling, write_mask
from .metrology import DropReport, ballistic_deflection, main_lobe, write_scan_csv, write_trajectory_csv
from .modes import fwhm
from .propagation import GuardBandError
from .scenarios import SECTIONS, ScenarioConfig, ScenarioError, convert, load_scenario, validate

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3

COMMAND_SECTIONS = {
    "mask": ("mask",),
    "bench": (),
    "scan": ("scan",),
    "trajectory": ("trajectory",),
    "block": ("block", "counting"),
    "coincidence": ("counting",),
}


def _flag(section: str, key: str) -> str:
    # keys that clash across sections are prefixed on the command line
    if section == "block" and key == "from_tap":
        return "--block-from-tap"
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airyphoton", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, sections in COMMAND_SECTIONS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="scenario YAML; flags override its values")
        p.add_argument("--out", help="output root directory")
        p.add_argument("--name", help="run name used in the output directory")
        if command != "mask":
            p.add_argument("--bench", help="bench description file")
        if command in ("block", "coincidence"):
            p.add_argument("--seed", help="random seed for the counting Monte Carlo")
        if command == "mask":
            p.add_argument("--force", action="store_true", help="write the mask even if it aliases")
        for section in sections:
            for key, (kind, default) in SECTIONS[section].items():
                p.add_argument(_flag(section, key), dest=f"{section}.{key}", default=None,
                               help=f"{section}.{key} ({kind}, default {default})")
    return parser


def _scenario(args) -> ScenarioConfig:
    cfg = load_scenario(args.config) if args.config else ScenarioConfig(name=args.command)
    if getattr(args, "bench", None):
        cfg.bench = Path(args.bench)
    if getattr(args, "seed", None) is not None:
        cfg.seed = convert("seed", args.seed, "int")
    for section in COMMAND_SECTIONS[args.command]:
        for key, (kind, _) in SECTIONS[section].items():
            value = getattr(args, f"{section}.{key}")
            if value is not None:
                v = convert(f"{section}.{key}", value, kind)
                cfg.sections[section][key] = Path(v) if kind == "path" else v
    if args.name:
        cfg.name = args.name
    return cfg


def _run_dir(args, cfg: ScenarioConfig) -> Path:
    root = args.out or os.environ.get("AIRY_OUT") or cfg.out_dir or "runs"
    stamp = datetime.now().strftime("%Y%m%dT%H%M%S")
    base = Path(root) / f"{stamp}-{cfg.name or args.command}"
    run, i = base, 1
    while run.exists():
        run, i = base.with_name(f"{base.name}-{i}"), i + 1
    run.mkdir(parents=True)
    return run


def _finish(run: Path, args, cfg: ScenarioConfig, results: dict, files) -> None:
    manifest = {
        "command": args.command,
        "version": __version__,
        "created": datetime.now().isoformat(timespec="seconds"),
        "config": args.config or "",
        **{k: v for k, v in cfg.parameters().items() if k.split(".")[0] in ("scenario", "bench", "seed", *COMMAND_SECTIONS[args.command])},
        **{f"result.{k}": v for k, v in results.items()},
        "files": ", ".join(sorted(Path(f).name for f in files)),
    }
    write_manifest(run / "manifest.txt", manifest)
    print(f"artifacts: {run}")


def _section_header(cfg: ScenarioConfig, *sections) -> dict:
    return {k: v for k, v in cfg.parameters().items() if k.split(".")[0] in ("scenario", "bench", "seed", *sections)}


def cmd_mask(args, cfg: ScenarioConfig) -> int:
    s = cfg.section("mask")
    k_ramp = None
    if s["ramp_period"] is not None:
        k_ramp = TWO_PI / s["ramp_period"]
    elif s["ramp"] == "off":
        k_ramp = 0.0
    elif s["ramp"] != "default":
        raise ScenarioError("mask.ramp must be 'default' or 'off'")
    design = design_for_airy(s["x0"], s["a"], s["f"], s["wavelength"], s["extent"], s["pixel"], k_ramp=k_ramp)
    report = validate_sampling(design)
    if report.aliased and not args.force:
        print(report.describe(), file=sys.stderr)
        print("error: refusing to write an aliased mask (use --force to override)", file=sys.stderr)
        return EXIT_INVALID
    mask = render(design, s["levels"])
    run = _run_dir(args, cfg)
    meta = write_mask(mask, run / "mask.pgm")
    (run / "sampling.txt").write_text(report.describe() + "\n")
    print(report.describe())
    print(f"x0 = {design.x0:.6g} m, a = {design.a:.6g}, w = {design.w:.6g} m, w_g = {design.w_g:.6g} m, "
          f"{mask.npix_x}x{mask.npix_y} pixels")
    results = {"aliased": report.aliased, "w": design.w, "w_g": design.w_g, "nu_max": report.nu_max,
               "limit": report.limit}
    _finish(run, args, cfg, results, [run / "mask.pgm", meta, run / "sampling.txt"])
    return EXIT_OK


def cmd_bench(args, cfg: ScenarioConfig) -> int:
    validate(cfg, needs_bench=True)
    bench = load_bench(cfg.bench)
    results = run_bench(bench)
    run = _run_dir(args, cfg)
    files = write_taps(results, run)
    lines = ["label,z_m,power,lobe_x_m,lobe_y_m"]
    summary = {}
    for r in results:
        x, y = main_lobe(r.field)
        lines.append(f"{r.label},{r.z!r},{total_power(r.field)!r},{x!r},{y!r}")
        summary[f"{r.label}.z"] = r.z
        summary[f"{r.label}.lobe_x"] = x
        print(f"tap {r.label}: z = {r.z:.4g} m, power = {total_power(r.field):.6g}, main lobe at ({x:.4g}, {y:.4g}) m")
    (run / "summary.csv").write_text("\n".join(lines) + "\n")
    _finish(run, args, cfg, summary, files + [run / "summary.csv"])
    return EXIT_OK


def cmd_scan(args, cfg: ScenarioConfig) -> int:
    validate(cfg, needs_bench=True)
    s = cfg.section("scan")
    f = field_at_tap(load_bench(cfg.bench), s["tap"])
    scan = main_lobe_scan(f, s["diameter"], s["step"], s["range"], plane=s["tap"])
    width = fwhm(scan.profile)
    run = _run_dir(args, cfg)
    write_scan_csv(scan, run / "scan.csv", {"fwhm_m": width, **_section_header(cfg, "scan")})
    print(f"{len(scan.profile.positions)}-point scan at tap {s['tap']!r}: main-lobe FWHM = {width * 1e6:.1f} um")
    _finish(run, args, cfg, {"fwhm": width, "points": len(scan.profile.positions)}, [run / "scan.csv"])
    return EXIT_OK


def cmd_trajectory(args, cfg: ScenarioConfig) -> int:
    validate(cfg, needs_bench=True)
    s = cfg.section("trajectory")
    bench = load_bench(cfg.bench)
    fit, _ = trajectory(bench, s["planes"], s["from_tap"], s["ambiguity_db"])
    run = _run_dir(args, cfg)
    z_end = float(fit.z[-1]) if fit.z.size else 0.0
    theory = ballistic_deflection(max(s["planes"]), _airy_x0(bench), bench.grid.wavelength)
    header = _section_header(cfg, "trajectory")
    write_trajectory_csv(fit, run / "trajectory.csv", {"ballistic_deflection_m": theory, **header})
    files = [run / "trajectory.csv"]
    zmax = max(s["planes"])
    print(f"fit: x = {fit.c0:.4g} + {fit.c1:.4g} z + {fit.c2:.4g} z^2, R^2 = {fit.r2:.6f}")
    print(f"deflection at {zmax:g} m: {fit.deflection(zmax) * 1e3:.3f} mm (ballistic law {theory * 1e3:.3f} mm)")
    if fit.excluded:
        print(f"ambiguous planes excluded: {list(fit.excluded)}")
    results = {"c0": fit.c0, "c1": fit.c1, "c2": fit.c2, "r2": fit.r2, "deflection": fit.deflection(zmax),
               "ballistic": theory, "last_plane": z_end}
    if s["reference_bench"] is not None:
        ref_bench = load_bench(s["reference_bench"])
        ref, _ = trajectory(ref_bench, s["planes"], None, s["ambiguity_db"])
        write_trajectory_csv(ref, run / "reference_trajectory.csv", header)
        files.append(run / "reference_trajectory.csv")
        print(f"reference: c2 = {ref.c2:.3g} 1/m, |c2| z^2 = {abs(ref.deflection(zmax)) * 1e3:.4f} mm")
        results["reference_c2"] = ref.c2
    _finish(run, args, cfg, results, files)
    return EXIT_OK


def _airy_x0(bench) -> float:
    for e in bench.elements:
        if e.kind == "slm" and "x0" in e.params:
            return e.params["x0"]
        if e.kind == "source" and e.arg == "airy":
            return e.params["x0"]
    raise ScenarioError("bench has no Airy design (slm x0= or airy source) to compare against")


def cmd_block(args, cfg: ScenarioConfig) -> int:
    with_counting = bool(cfg.sections["counting"])
    validate(cfg, needs_bench=True, needs_seed=with_counting)
    setup = block_setup(load_bench(cfg.bench), cfg.block_geometry(), cfg.section("block")["from_tap"])
    airy, gauss = run_block(setup)
    run = _run_dir(args, cfg)
    geometry = (f"# edge_x = {setup.edge!r}\n# tilt_x = {setup.tilt[0]!r}\n# tilt_y = {setup.tilt[1]!r}\n"
                f"# collector_x = {setup.lobe_end[0]!r}\n# collector_y = {setup.lobe_end[1]!r}\n")
    (run / "airy_drop.txt").write_text(geometry + airy.to_text())
    (run / "gaussian_drop.txt").write_text(geometry + gauss.to_text())
    files = [run / "airy_drop.txt", run / "gaussian_drop.txt"]
    print(f"block edge at x = {setup.edge * 1e3:.3f} mm; coupler at ({setup.lobe_end[0] * 1e3:.3f}, "
          f"{setup.lobe_end[1] * 1e3:.3f}) mm")
    print(f"Gaussian drop = {gauss.drop:.3f}, Airy drop = {airy.drop:.3f}")
    results = {"airy_drop": airy.drop, "gaussian_drop": gauss.drop, "edge": setup.edge}
    if with_counting:
        results.update(_counting_pair(cfg, airy.drop, run, files))
    _finish(run, args, cfg, results, files)
    return EXIT_OK


def _counting_pair(cfg, drop, run, files) -> dict:
    from dataclasses import replace

    base = cfg.counting_setup()
    out = {}
    for tag, setup, seed in (("open", replace(base, drop=0.0), cfg.seed), ("blocked", replace(base, drop=drop), cfg.seed + 1)):
        res = run_coincidence(setup, seed)
        path = run / f"histogram_{tag}.csv"
        write_histogram_csv(res.histogram, path, {**res.params, "car": res.car, "sigma": res.sigma})
        files.append(path)
        out[f"{tag}.car"], out[f"{tag}.sigma"], out[f"{tag}.coincidences"] = res.car, res.sigma, res.coincidences
        print(f"{tag}: coincidences = {res.coincidences}, CAR = {res.car:.1f} +- {res.sigma:.1f}")
    ratio = out["blocked.coincidences"] / max(out["open.coincidences"], 1)
    out["coincidence_ratio"] = ratio
    print(f"coincidence ratio blocked/open = {ratio:.3f} (1 - drop = {1 - drop:.3f})")
    return out


def cmd_coincidence(args, cfg: ScenarioConfig) -> int:
    validate(cfg, needs_seed=True)
    setup = cfg.counting_setup()
    report = cfg.section("counting")["drop_report"]
    if report is not None:
        from dataclasses import replace

        setup = replace(setup, drop=DropReport.from_text(Path(report).read_text()).drop)
    res = run_coincidence(setup, cfg.seed)
    run = _run_dir(args, cfg)
    meta = {**res.params, "car": res.car, "sigma": res.sigma, "analytic_car": res.analytic}
    write_histogram_csv(res.histogram, run / "histogram.csv", meta)
    lines = [f"car = {res.car!r}", f"sigma = {res.sigma!r}", f"analytic_car = {res.analytic!r}",
             f"exact_car = {res.exact!r}", f"coincidences = {res.coincidences}",
             f"singles_s = {res.singles_s}", f"singles_i = {res.singles_i}"]
    (run / "car.txt").write_text("\n".join(lines) + "\n")
    print(f"CAR = {res.car:.2f} +- {res.sigma:.2f} (analytic {res.analytic:.2f}); "
          f"coincidences = {res.coincidences}, singles s/i = {res.singles_s}/{res.singles_i}")
    _finish(run, args, cfg, {"car": res.car, "sigma": res.sigma, "analytic_car": res.analytic,
                             "coincidences": res.coincidences}, [run / "histogram.csv", run / "car.txt"])
    return EXIT_OK


COMMANDS = {
    "mask": cmd_mask,
    "bench": cmd_bench,
    "scan": cmd_scan,
    "trajectory": cmd_trajectory,
    "block": cmd_block,
    "coincidence": cmd_coincidence,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _scenario(args)
        if cfg.command and args.config and cfg.command != args.command:
            print(f"note: scenario {cfg.name!r} is meant for the {cfg.command!r} command", file=sys.stderr)
        return COMMANDS[args.command](args, cfg)
    except (GuardBandError, BenchElementError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ScenarioError, BenchParseError, FieldValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RuntimeError, OSError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
