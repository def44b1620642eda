"""End-to-end acceptance gate.

One test per shipping criterion, in order.  Each test prints a PASS line
with the measured quantity next to its threshold (visible with -s or in
captured output); the pytest -v status line per test is the machine
signal.  Criterion 3 (rotation-group integrity) is asserted last because
it aggregates over every equilibrium solved while the rest of this
module ran.
"""

import itertools
import json
import math
import threading
import time
from pathlib import Path

import numpy as np
import pytest

import everrod.cli as cli
import everrod.solver as solver
from everrod.calibration import (
    MeasuredCurve,
    fit_alpha,
    fit_effective_modulus,
    fit_eversion_pressure,
)
from everrod.designer import DesignProblem, design_bands
from everrod.domain import BandSpec, MaterialModel, reference_material, reference_rod
from everrod.lab import (
    LATERAL_DIRECTION,
    ForceDisplacementCurve,
    ordering_violations,
    run_characterization_battery,
    stiffness_index,
    sweep_force_displacement,
)
from everrod.solver import LoadCase, SolverSettings, solve_point_load

EI_REFERENCE = 25.2e6 * math.pi * 0.020 ** 3 * 5e-5
MEASURED_EVERSION = ((0.0, 0.46), (0.1, 0.62), (0.2, 1.16),
                     (0.3, 1.53), (0.4, 3.39), (0.5, 9.01))


@pytest.fixture(scope="module", autouse=True)
def so3_stats():
    """Record orthogonality stats for every equilibrium solved in this module."""
    stats = {"count": 0, "max_defect": 0.0, "min_det": math.inf}
    lock = threading.Lock()
    original = solver.solve_point_load

    def recording(*args, **kwargs):
        state = original(*args, **kwargs)
        defect = state.max_orthogonality_defect()
        det = state.min_rotation_det()
        with lock:
            stats["count"] += 1
            stats["max_defect"] = max(stats["max_defect"], defect)
            stats["min_det"] = min(stats["min_det"], det)
        return state

    mp = pytest.MonkeyPatch()
    # displacement control and the sweeps resolve solve_point_load through
    # the solver module at call time; the CLI binds its own reference
    mp.setattr(solver, "solve_point_load", recording)
    mp.setattr(cli, "solve_point_load", recording)
    yield stats
    mp.undo()


def test_criterion_01_zero_load_identity(ref_rod, default_settings):
    t0 = time.perf_counter()
    state = solve_point_load(ref_rod, None,
                             LoadCase.point_force(0.6, (1.0, 0.0, 0.0), 0.0),
                             default_settings)
    elapsed = time.perf_counter() - t0
    err = float(np.linalg.norm(state.tip_position - np.array([0.0, 0.0, 0.6])))
    rel = err / 0.6
    assert rel < 1e-12
    assert elapsed < 0.1
    print(f"criterion 01 PASS: zero-load tip error {rel:.3e} rel (< 1e-12), "
          f"{elapsed * 1e3:.2f} ms (< 100 ms)")


def test_criterion_02_euler_bernoulli_oracle(ref_rod, default_settings):
    # force sized for a ~0.05% of L tip deflection, small enough that the
    # classic cantilever formula applies
    target = 5e-4 * ref_rod.length
    force = 3.0 * EI_REFERENCE * target / ref_rod.length ** 3
    t0 = time.perf_counter()
    state = solve_point_load(ref_rod, None,
                             LoadCase.point_force(0.6, (1.0, 0.0, 0.0), force),
                             default_settings)
    elapsed = time.perf_counter() - t0
    predicted = force * ref_rod.length ** 3 / (3.0 * EI_REFERENCE)
    rel = abs(state.tip_position[0] - predicted) / predicted
    assert rel < 0.01
    assert elapsed < 1.0
    print(f"criterion 02 PASS: deflection within {rel * 100:.3f}% of F*L^3/(3EI) "
          f"(< 1%), {elapsed * 1e3:.1f} ms (< 1 s)")


def test_criterion_04_convergence_order(ref_rod):
    load = LoadCase.point_force(0.6, (1.0, 0.0, 0.0), 0.05)

    def tip(n):
        return solve_point_load(ref_rod, None, load,
                                SolverSettings(grid_nodes=n)).tip_position

    err_coarse = float(np.linalg.norm(tip(50) - tip(200)))
    err_half = float(np.linalg.norm(tip(100) - tip(400)))
    ratio = err_coarse / err_half
    assert ratio >= 8.0
    print(f"criterion 04 PASS: halving the step shrank the tip error "
          f"{ratio:.2f}x (>= 8x; e(h)={err_coarse:.3e}, e(h/2)={err_half:.3e})")


def test_criterion_05_trend_battery(ref_material, default_settings):
    t0 = time.perf_counter()
    battery = run_characterization_battery(ref_material, default_settings, jobs=8)
    elapsed = time.perf_counter() - t0
    assert len(battery.results) == 19
    violations = ordering_violations(battery)
    assert violations == []
    assert elapsed < 30.0
    k_max = max(res.stiffness_index for res in battery.results.values())
    k_min = min(res.stiffness_index for res in battery.results.values())
    print(f"criterion 05 PASS: 19 variants, all three stiffness orderings strict "
          f"(k spans {k_min:.3f}..{k_max:.3f} N/m), {elapsed:.1f} s (< 30 s)")


def test_criterion_06_calibration_round_trip(ref_rod, default_settings):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2026)
    true_e = 25.2e6
    mat_true = MaterialModel(E_eff_ref=true_e, p_ref=ref_rod.internal_pressure)

    def noisy_measured(spec, replicates=3):
        curve = sweep_force_displacement(spec, mat_true, LATERAL_DIRECTION,
                                         0.02, 11, default_settings)
        out = []
        for _ in range(replicates):
            samples = tuple(
                (x, f * (1.0 + 0.02 * float(rng.standard_normal())) if x > 0 else f)
                for x, f in curve.samples)
            out.append(MeasuredCurve(samples=samples, pressure=spec.internal_pressure))
        return out

    fit_e = fit_effective_modulus(noisy_measured(ref_rod), ref_rod,
                                  default_settings, base_material=mat_true)
    e_rel = abs(fit_e.value("E_eff") - true_e) / true_e
    assert e_rel < 0.05

    # identification geometry: bands sit near the base so they carry a long
    # moment arm to the loaded tip, making the force strongly alpha-dependent
    alpha_rels = {}
    for rho, alpha_true in ((0.5, 0.36), (0.3, 0.46), (0.1, 0.55)):
        spec = reference_rod(tuple(BandSpec(d, rho) for d in (0.45, 0.50, 0.55)))
        fit = fit_alpha(noisy_measured(spec), spec, mat_true, default_settings)
        alpha_rels[alpha_true] = abs(fit.value("alpha") - alpha_true) / alpha_true
        assert alpha_rels[alpha_true] < 0.05
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    worst = max(alpha_rels.values())
    print(f"criterion 06 PASS: 2% noise -> E_eff off by {e_rel * 100:.2f}% and "
          f"alpha by at most {worst * 100:.2f}% (< 5%), {elapsed:.1f} s (< 60 s)")


def test_criterion_07_eversion_pressure_law():
    t0 = time.perf_counter()
    model = fit_eversion_pressure(MEASURED_EVERSION)
    elapsed = time.perf_counter() - t0
    worst = 0.0
    for rho, measured in MEASURED_EVERSION:
        predicted = float(model.predict(rho))
        worst = max(worst, abs(measured - predicted) / predicted)
    assert worst <= 0.35
    assert elapsed < 0.1
    print(f"criterion 07 PASS: p0={model.p0_kpa:.4f} kPa, c={model.c:.4f}; every "
          f"median within {worst * 100:.1f}% of its prediction (<= 35%), "
          f"{elapsed * 1e3:.2f} ms (< 100 ms)")


def _brute_force_best(problem, mat, settings):
    """Independent exhaustive search mirroring the designer's objective."""
    def spacing_ok(combo):
        return all(b - a >= problem.min_spacing - 1e-12
                   for a, b in zip(combo, combo[1:]))

    candidates = [(None, ())]
    for rho in problem.rho_candidates:
        if rho == 0.0:
            continue
        if float(problem.eversion_model.predict(rho)) > problem.pressure_budget_kpa:
            continue
        for count in range(1, problem.max_bands + 1):
            for combo in itertools.combinations(problem.placement_grid, count):
                if spacing_ok(combo):
                    candidates.append((rho, combo))

    scored = []
    for rho, combo in candidates:
        bands = tuple(BandSpec(d, rho) for d in combo) if combo else ()
        spec = problem.base_spec.with_bands(bands)
        curve = sweep_force_displacement(spec, mat, LATERAL_DIRECTION, 0.02, 2,
                                         settings)
        scored.append((stiffness_index(curve, 0.02), rho, combo))
    scored.sort(key=lambda item: (item[0], len(item[2]),
                                  item[1] if item[1] is not None else 0.0,
                                  tuple(sorted(problem.base_spec.length - d
                                               for d in item[2]))))
    return scored


def test_criterion_08_designer_feasibility(ref_material, default_settings):
    model = fit_eversion_pressure(MEASURED_EVERSION)

    budgeted = DesignProblem(base_spec=reference_rod(), max_bands=3,
                             placement_grid=(0.05, 0.10, 0.15),
                             rho_candidates=(0.1, 0.2, 0.3, 0.4, 0.5),
                             pressure_budget_kpa=3.0, eversion_model=model)
    result = design_bands(budgeted, ref_material, default_settings, n_samples=2)
    assert result.bands
    assert max(b.reduction_ratio for b in result.bands) < 0.4
    assert result.predicted_eversion_kpa <= 3.0
    scored = _brute_force_best(budgeted, ref_material, default_settings)
    assert all(rho is None or rho < 0.4 for _, rho, _ in scored)
    best_k, best_rho, best_combo = scored[0]
    assert {(b.distance_from_tip, b.reduction_ratio) for b in result.bands} == {
        (d, best_rho) for d in best_combo}
    assert result.predicted_k == pytest.approx(best_k, rel=1e-9)

    unconstrained = DesignProblem(base_spec=reference_rod(), max_bands=4,
                                  placement_grid=(0.05, 0.10, 0.15, 0.20),
                                  rho_candidates=(0.5,),
                                  pressure_budget_kpa=100.0, eversion_model=model)
    result_u = design_bands(unconstrained, ref_material, default_settings, n_samples=2)
    assert len(result_u.bands) == 4
    scored_u = _brute_force_best(unconstrained, ref_material, default_settings)
    assert len(scored_u[0][2]) == 4
    print(f"criterion 08 PASS: 3 kPa budget picked rho="
          f"{max(b.reduction_ratio for b in result.bands):.1f} (< 0.4) and matched "
          f"the brute-force optimum; unconstrained run used all 4 band slots")


def test_criterion_09_stiffness_index_arithmetic():
    curve = ForceDisplacementCurve(samples=((0.0, 0.0), (0.02, 0.2388)))
    k = stiffness_index(curve, 0.02)
    assert k == 11.94
    print(f"criterion 09 PASS: (0.2388 N - 0) / 0.02 m == {k} N/m exactly")


def test_criterion_10_deterministic_reruns(tmp_path):
    doc = {
        "schema_version": "1",
        "settings": {"grid_nodes": 300},
        "protocol": {"kind": "sweep", "max_displacement_m": 0.02, "samples": 5},
    }
    scenario = tmp_path / "scenario.json"
    scenario.write_text(json.dumps(doc))

    def run(out):
        assert cli.main(["simulate", str(scenario), "--out", str(out)]) == 0
        return {p.name: p.read_bytes() for p in sorted(Path(out).iterdir())}

    first = run(tmp_path / "run1")
    second = run(tmp_path / "run2")
    assert set(first) == {"curve.csv", "plot.svg", "report.json", "state.csv"}
    assert first == second
    print("criterion 10 PASS: re-running the scenario reproduced all four "
          "artifacts (CSV/JSON/SVG) byte-for-byte")


def test_criterion_03_so3_integrity(so3_stats):
    # aggregated over every equilibrium the preceding criteria solved
    assert so3_stats["count"] > 0
    assert so3_stats["max_defect"] < 1e-9
    assert so3_stats["min_det"] > 0.0
    print(f"criterion 03 PASS: {so3_stats['count']} solves, worst "
          f"||R^T R - I||_inf = {so3_stats['max_defect']:.3e} (< 1e-9), "
          f"min det R = {so3_stats['min_det']:.12f} (> 0)")
