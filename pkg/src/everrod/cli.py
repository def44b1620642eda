"""Command-line interface: simulate, battery, fit, design, plot.

Every command reads flat files (JSON scenarios, CSV data), writes flat
files into --out, and returns a process exit code: 0 on success, 2 for
validation/parse problems, 3 for solver non-convergence, 4 for an
infeasible design.  Log verbosity comes from the EVERROD_LOG environment
variable (DEBUG/INFO/WARNING/ERROR).

Run reports embed the scenario digest and tool version.  Wall-clock time
is logged but kept out of the report file so repeated runs of the same
scenario produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

from . import __version__
from .calibration import (
    MeasuredCurve,
    fit_alpha,
    fit_effective_modulus,
    fit_eversion_pressure,
    read_eversion_points_csv_text,
)
from .designer import design_bands
from .errors import DataError, EverrodError, ValidationError
from .lab import (
    ForceDisplacementCurve,
    characterization_variants,
    ordering_violations,
    read_curve_csv_text,
    run_characterization_battery,
    stiffness_index,
    sweep_force_displacement,
)
from .scenario import Scenario, load_scenario
from .solver import LoadCase, SolverSettings, solve_imposed_displacement, solve_point_load
from .svg import plot_curve

log = logging.getLogger(__name__)


@dataclass
class RunReport:
    """Reproducible run summary; wall clock stays out of the serialized form."""

    command: str
    scenario_digest: str
    results: dict
    tool_version: str = __version__
    wall_clock_s: float = 0.0

    def to_json(self) -> str:
        doc = {
            "command": self.command,
            "results": self.results,
            "scenario_digest": self.scenario_digest,
            "tool_version": self.tool_version,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _configure_logging() -> None:
    level_name = os.environ.get("EVERROD_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_setting_overrides(settings: SolverSettings, args) -> SolverSettings:
    overrides = {}
    if getattr(args, "grid_nodes", None) is not None:
        overrides["grid_nodes"] = args.grid_nodes
    if getattr(args, "shooting_tol", None) is not None:
        overrides["shooting_tol"] = args.shooting_tol
    if getattr(args, "displacement_tol", None) is not None:
        overrides["displacement_tol"] = args.displacement_tol
    if getattr(args, "max_force", None) is not None:
        overrides["max_force"] = args.max_force
    return replace(settings, **overrides) if overrides else settings


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(text)
    log.info("wrote %s", path)


def _state_results(state, extra: dict | None = None) -> dict:
    doc = {
        "tip_position_m": [float(v) for v in state.tip_position],
        "base_moment_nm": [float(v) for v in state.base_moment],
        "load_station_moment_nm": [float(v) for v in state.m[state.load_index]],
        "max_orthogonality_defect": state.max_orthogonality_defect(),
    }
    if extra:
        doc.update(extra)
    return doc


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    scenario = load_scenario(args.scenario)
    if scenario.protocol is None:
        raise ValidationError("scenario has no 'protocol' section; "
                              "use the battery/design commands for those documents")
    settings = _apply_setting_overrides(scenario.settings, args)
    out = _out_dir(args)
    proto = scenario.protocol
    spec, mat = scenario.rod, scenario.material

    if proto.kind == "point_force":
        load = LoadCase.point_force(proto.station, proto.direction, proto.amount)
        state = solve_point_load(spec, mat, load, settings)
        state.write_csv(out / "state.csv")
        results = _state_results(state, {"force_n": proto.amount})
    elif proto.kind == "imposed_displacement":
        load = LoadCase.imposed_displacement(proto.station, proto.direction, proto.amount)
        state, force = solve_imposed_displacement(spec, mat, load, settings)
        state.write_csv(out / "state.csv")
        results = _state_results(state, {
            "displacement_m": proto.amount,
            "force_n": force,
        })
    else:  # sweep
        if proto.amount == 0.0:
            # zero-stroke protocol: nothing to sweep, report the rest state
            load = LoadCase.point_force(proto.station, proto.direction, 0.0)
            state = solve_point_load(spec, mat, load, settings)
            state.write_csv(out / "state.csv")
            results = _state_results(state, {"stroke_m": 0.0, "empty_stroke": True})
        else:
            curve = sweep_force_displacement(spec, mat, proto.direction, proto.amount,
                                             proto.samples, settings)
            curve.write_csv(out / "curve.csv")
            _write(out / "plot.svg", plot_curve([curve]))
            load = LoadCase.imposed_displacement(proto.station, proto.direction,
                                                 proto.amount)
            state, force = solve_imposed_displacement(spec, mat, load, settings)
            state.write_csv(out / "state.csv")
            results = {
                "stroke_m": proto.amount,
                "terminal_force_n": curve.terminal_force,
                "stiffness_index_n_per_m": stiffness_index(curve, proto.amount),
                **_state_results(state),
            }

    report = RunReport(command="simulate", scenario_digest=scenario.digest,
                       results=results, wall_clock_s=time.perf_counter() - t0)
    _write(out / "report.json", report.to_json())
    log.info("simulate finished in %.3f s", report.wall_clock_s)
    return 0


def cmd_battery(args) -> int:
    t0 = time.perf_counter()
    scenario = load_scenario(args.scenario)
    if scenario.battery is None:
        raise ValidationError("scenario has no 'battery' section")
    if scenario.rod.bands:
        raise ValidationError("battery base rod must be band-free; variants add bands")
    settings = _apply_setting_overrides(scenario.settings, args)
    out = _out_dir(args)
    req = scenario.battery

    if req.variant_ids is not None:
        known = {vid for vid, _ in characterization_variants(scenario.rod)[0]}
        unknown = [vid for vid in req.variant_ids if vid not in known]
        if unknown:
            raise ValidationError(
                f"unknown battery variant(s) {unknown}; known ids: {sorted(known)}")

    battery = run_characterization_battery(
        scenario.material, settings, base=scenario.rod, stroke=req.stroke,
        n_samples=req.samples, jobs=args.jobs)

    if req.variant_ids is not None:
        keep = set(req.variant_ids)
        battery = replace(
            battery,
            variants=tuple((vid, sp) for vid, sp in battery.variants if vid in keep),
            results={vid: res for vid, res in battery.results.items() if vid in keep},
            groups=tuple((name, tuple(v for v in ids if v in keep))
                         for name, ids in battery.groups))

    battery.write_csv(out / "battery.csv")
    curves_dir = out / "curves"
    curves_dir.mkdir(exist_ok=True)
    for vid, _ in battery.variants:
        battery.results[vid].curve.write_csv(curves_dir / f"{vid}.csv")
    _write(out / "battery.svg",
           plot_curve([battery.results[vid].curve for vid, _ in battery.variants]))

    results = {
        "stiffness_index_n_per_m": {vid: battery.k_for(vid)
                                    for vid, _ in battery.variants},
        "groups": {name: list(ids) for name, ids in battery.groups},
        "stroke_m": battery.stroke,
    }
    violations: list[str] = []
    if args.check_trends:
        violations = ordering_violations(battery)
        results["trend_violations"] = violations

    report = RunReport(command="battery", scenario_digest=scenario.digest,
                       results=results, wall_clock_s=time.perf_counter() - t0)
    _write(out / "report.json", report.to_json())
    log.info("battery finished in %.3f s", report.wall_clock_s)

    if violations:
        for v in violations:
            print(f"trend violation: {v}", file=sys.stderr)
        return 1
    return 0


def _collect_curve_files(data: Path) -> list[Path]:
    if data.is_file():
        return [data]
    files = sorted(p for p in data.glob("*.csv"))
    if not files:
        raise DataError(f"no CSV files found in {data}")
    return files


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    out = _out_dir(args)
    data = Path(args.data)
    files = _collect_curve_files(data)
    digest = hashlib.sha256()
    for p in files:
        digest.update(p.read_bytes())

    if args.kind == "eversion":
        if len(files) != 1:
            raise DataError(f"eversion fit expects exactly one CSV, found {len(files)} in {data}")
        points = read_eversion_points_csv_text(files[0].read_text())
        model = fit_eversion_pressure(points)
        _write(out / "eversion_model.json", model.to_json())
        results = {"p0_kpa": model.p0_kpa, "c": model.c,
                   "log_residuals": list(model.log_residuals)}
    else:
        if args.scenario is None:
            raise ValidationError("modulus/alpha fits need --scenario for the rod "
                                  "geometry and settings")
        scenario = load_scenario(args.scenario)
        digest.update(scenario.digest.encode())
        settings = _apply_setting_overrides(scenario.settings, args)
        curves = [MeasuredCurve.from_csv(p, pressure=scenario.rod.internal_pressure)
                  for p in files]
        if args.kind == "modulus":
            fit = fit_effective_modulus(curves, scenario.rod, settings,
                                        fit_length=args.fit_length,
                                        base_material=scenario.material)
        else:
            fit = fit_alpha(curves, scenario.rod, scenario.material, settings)
        _write(out / "fit.json", fit.to_json())
        results = {name: value for name, value, _ in fit.parameters}
        results["converged"] = fit.converged
        results["residual_norm"] = fit.residual_norm

    report = RunReport(command=f"fit-{args.kind}", scenario_digest=digest.hexdigest(),
                       results=results, wall_clock_s=time.perf_counter() - t0)
    _write(out / "report.json", report.to_json())
    log.info("fit finished in %.3f s", report.wall_clock_s)
    return 0


def cmd_design(args) -> int:
    t0 = time.perf_counter()
    scenario = load_scenario(args.scenario)
    if scenario.design is None:
        raise ValidationError("scenario has no 'design' section")
    settings = _apply_setting_overrides(scenario.settings, args)
    out = _out_dir(args)

    result = design_bands(scenario.design, scenario.material, settings, jobs=args.jobs)

    design_doc = {
        "bands": [{"distance_from_tip_m": b.distance_from_tip,
                   "reduction_ratio": b.reduction_ratio,
                   "width_m": b.width} for b in result.bands],
        "predicted_k_n_per_m": result.predicted_k,
        "predicted_eversion_kpa": result.predicted_eversion_kpa,
        "layouts_evaluated": result.layouts_evaluated,
        "search_mode": result.search_mode,
    }
    _write(out / "design.json", json.dumps(design_doc, indent=2, sort_keys=True) + "\n")
    _write(out / "fabrication.txt", result.fabrication.to_text())

    report = RunReport(command="design", scenario_digest=scenario.digest,
                       results=design_doc, wall_clock_s=time.perf_counter() - t0)
    _write(out / "report.json", report.to_json())
    log.info("design finished in %.3f s", report.wall_clock_s)
    return 0


def cmd_plot(args) -> int:
    out = _out_dir(args)
    curves: list[ForceDisplacementCurve] = []
    for path in args.curves:
        p = Path(path)
        curves.append(read_curve_csv_text(p.read_text(), spec_id=p.stem))
    _write(out / "plot.svg", plot_curve(curves))
    return 0


def _add_common_flags(sub, *, jobs: bool = False) -> None:
    sub.add_argument("--out", default="everrod-out", help="output directory")
    sub.add_argument("--grid-nodes", type=int, default=None,
                     help="override integration grid steps")
    sub.add_argument("--shooting-tol", type=float, default=None,
                     help="override shooting moment tolerance (N*m)")
    sub.add_argument("--displacement-tol", type=float, default=None,
                     help="override displacement root-find tolerance (m)")
    sub.add_argument("--max-force", type=float, default=None,
                     help="override the displacement-mode force cap (N)")
    if jobs:
        sub.add_argument("--jobs", type=int, default=None,
                         help="parallel workers (default: up to 8)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="everrod",
        description="Cosserat-rod toolkit for banded eversion-robot tubes: "
                    "simulate, characterize, calibrate, and design band layouts.")
    parser.add_argument("--version", action="version", version=f"everrod {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="run one solve or sweep from a scenario")
    sim.add_argument("scenario", help="scenario JSON with a 'protocol' section")
    _add_common_flags(sim)
    sim.set_defaults(func=cmd_simulate)

    bat = subs.add_parser("battery", help="run the characterization battery")
    bat.add_argument("scenario", help="scenario JSON with a 'battery' section")
    bat.add_argument("--check-trends", action="store_true",
                     help="fail (exit 1) if the stiffness orderings are violated")
    _add_common_flags(bat, jobs=True)
    bat.set_defaults(func=cmd_battery)

    fit = subs.add_parser("fit", help="identify parameters from measured CSV data")
    fit.add_argument("kind", choices=("modulus", "alpha", "eversion"))
    fit.add_argument("--data", required=True,
                     help="CSV file or directory of CSV files")
    fit.add_argument("--scenario", default=None,
                     help="scenario JSON giving rod geometry (modulus/alpha)")
    fit.add_argument("--fit-length", action="store_true",
                     help="co-fit the free length as a nuisance parameter (modulus)")
    _add_common_flags(fit)
    fit.set_defaults(func=cmd_fit)

    des = subs.add_parser("design", help="search band layouts under a pressure budget")
    des.add_argument("scenario", help="scenario JSON with a 'design' section")
    _add_common_flags(des, jobs=True)
    des.set_defaults(func=cmd_design)

    plo = subs.add_parser("plot", help="render curve CSVs into one SVG")
    plo.add_argument("curves", nargs="+", help="curve CSV files (displacement_m,force_n)")
    plo.add_argument("--out", default="everrod-out", help="output directory")
    plo.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EverrodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
