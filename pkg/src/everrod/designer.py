"""Band-layout search under an eversion-pressure budget.

A layout is a set of band placements on a candidate grid sharing one
reduction ratio.  Its predicted eversion pressure is the empirical-law
prediction at the layout's largest ratio (the tightest constriction
gates eversion); its merit is the simulated full-stroke stiffness index,
lower being better.  The search enumerates every admissible layout when
that is affordable (up to 10^4 candidates) and otherwise falls back to a
greedy build-up that adds the single most softening band per step.

Ties break deterministically: fewer bands, then smaller ratio, then
placements closest to the base.
"""

from __future__ import annotations

import concurrent.futures
import itertools
import logging
import math
import os
from dataclasses import dataclass

from .calibration import EversionPressureModel, predict_eversion_pressure
from .domain import BandSpec, MaterialModel, RodSpec, material_of
from .errors import InfeasibleDesignError, ValidationError
from .lab import (
    DEFAULT_SWEEP_SAMPLES,
    FULL_STROKE,
    LATERAL_DIRECTION,
    stiffness_index,
    sweep_force_displacement,
)
from .solver import SolverSettings

log = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 10_000


@dataclass(frozen=True)
class DesignProblem:
    """Search space and constraints for one design request."""

    base_spec: RodSpec
    max_bands: int
    placement_grid: tuple[float, ...]  # meters from the tip
    rho_candidates: tuple[float, ...]
    pressure_budget_kpa: float
    eversion_model: EversionPressureModel
    min_spacing: float = 0.015

    def __post_init__(self):
        if self.base_spec.bands:
            raise ValidationError("design base spec must be band-free")
        if self.max_bands < 0:
            raise ValidationError(f"max_bands must be >= 0, got {self.max_bands}")
        if self.pressure_budget_kpa <= 0.0:
            raise ValidationError(
                f"pressure budget must be positive, got {self.pressure_budget_kpa} kPa")
        grid = tuple(sorted(float(d) for d in self.placement_grid))
        if len(set(grid)) != len(grid):
            raise ValidationError("placement grid has duplicate entries")
        for d in grid:
            # every grid point must admit a band fully inside the rod
            band = BandSpec(d, 0.0)
            lo, hi = band.support(self.base_spec.length)
            if lo < 0.0 or hi > self.base_spec.length:
                raise ValidationError(
                    f"grid placement {d} m from tip puts a band outside the rod")
        if self.min_spacing < 0.015:
            raise ValidationError(
                f"min_spacing must be at least one band width (0.015 m), got {self.min_spacing}")
        rhos = tuple(sorted(float(r) for r in self.rho_candidates))
        if not rhos:
            raise ValidationError("need at least one candidate reduction ratio")
        if len(set(rhos)) != len(rhos):
            raise ValidationError("duplicate candidate reduction ratios")
        for r in rhos:
            if not (0.0 <= r <= 0.6):
                raise ValidationError(f"candidate ratio {r} outside [0, 0.6]")
        object.__setattr__(self, "placement_grid", grid)
        object.__setattr__(self, "rho_candidates", rhos)

    def check_alpha_hull(self, mat: MaterialModel) -> None:
        hull_max = mat.alpha_table[-1][0]
        for r in self.rho_candidates:
            if r > hull_max:
                raise ValidationError(
                    f"candidate ratio {r} beyond the calibrated softening table "
                    f"(max {hull_max})")


@dataclass(frozen=True)
class FabricationSheet:
    """Cutting dimensions: tube sheet plus one strip per band."""

    sheet_width: float   # circumference pi * 2 r0, meters
    sheet_length: float  # rod length, meters
    strip_width: float   # band width, meters
    strips: tuple[tuple[float, float, float], ...]  # (distance_from_tip, rho, strip_length)

    def to_text(self) -> str:
        mm = 1e3
        lines = [
            "fabrication sheet",
            f"  tube sheet: {self.sheet_width * mm:.1f} mm wide x "
            f"{self.sheet_length * mm:.1f} mm long",
            f"  band strips ({self.strip_width * mm:.0f} mm wide):",
        ]
        if not self.strips:
            lines.append("    none (unbanded layout)")
        for d, rho, length in self.strips:
            lines.append(f"    {length * mm:.1f} mm strip -> band at {d * mm:.1f} mm "
                         f"from tip (reduction {rho * 100:.0f}%)")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DesignResult:
    """Chosen layout with its predicted performance and cut list."""

    bands: tuple[BandSpec, ...]
    predicted_k: float
    predicted_eversion_kpa: float
    fabrication: FabricationSheet
    layouts_evaluated: int
    search_mode: str

    def __post_init__(self):
        if self.search_mode not in ("exhaustive", "greedy"):
            raise ValidationError(f"unknown search mode {self.search_mode!r}")


def fabrication_sheet(bands: tuple[BandSpec, ...], spec: RodSpec) -> FabricationSheet:
    """Cut dimensions: sheet width is the tube circumference, strip length
    the constricted circumference pi * 2 r0 (1 - rho)."""
    circumference = math.pi * 2.0 * spec.base_radius
    strips = tuple(
        (b.distance_from_tip, b.reduction_ratio,
         circumference * (1.0 - b.reduction_ratio))
        for b in sorted(bands, key=lambda b: b.distance_from_tip))
    width = bands[0].width if bands else 0.015
    return FabricationSheet(sheet_width=circumference, sheet_length=spec.length,
                            strip_width=width, strips=strips)


def _admissible_placements(problem: DesignProblem, count: int):
    """All placement subsets of the grid with pairwise spacing respected."""
    grid = problem.placement_grid
    for combo in itertools.combinations(grid, count):
        ok = all(b - a >= problem.min_spacing - 1e-12
                 for a, b in zip(combo, combo[1:]))
        if ok:
            yield combo


def _layout_pressure(problem: DesignProblem, rho: float | None) -> float:
    effective_rho = 0.0 if rho is None else rho
    return float(predict_eversion_pressure(problem.eversion_model, effective_rho))


def _tie_break_key(spec_length: float, rho: float | None, placements: tuple[float, ...]):
    # fewer bands, then smaller ratio, then centers closest to the base
    positions = tuple(sorted(spec_length - d for d in placements))
    return (len(placements), rho if rho is not None else 0.0, positions)


def _enumerate_layouts(problem: DesignProblem):
    """Yield (rho or None, placements) for every admissible feasible layout."""
    yield None, ()
    for rho in problem.rho_candidates:
        if rho == 0.0:
            continue  # a zero-reduction band is a no-op; the empty layout covers it
        for count in range(1, problem.max_bands + 1):
            for combo in _admissible_placements(problem, count):
                yield rho, combo


def _count_layouts(problem: DesignProblem) -> int:
    total = 0
    for _ in _enumerate_layouts(problem):
        total += 1
        if total > EXHAUSTIVE_LIMIT:
            break
    return total


def design_bands(problem: DesignProblem, mat: MaterialModel | None,
                 settings: SolverSettings, *, jobs: int | None = None,
                 stroke: float = FULL_STROKE,
                 n_samples: int = DEFAULT_SWEEP_SAMPLES) -> DesignResult:
    """Pick the feasible layout with the lowest simulated stiffness index."""
    mat = material_of(problem.base_spec, mat)
    problem.check_alpha_hull(mat)

    budget = problem.pressure_budget_kpa
    if _layout_pressure(problem, None) > budget:
        raise InfeasibleDesignError(
            f"infeasible: even the unbanded layout needs "
            f"{_layout_pressure(problem, None):.3g} kPa to evert, above the "
            f"budget {budget:.3g} kPa (tightest constraint: pressure budget)")

    def evaluate(rho, placements) -> float:
        bands = tuple(BandSpec(d, rho) for d in placements) if placements else ()
        spec = problem.base_spec.with_bands(bands)
        curve = sweep_force_displacement(spec, mat, LATERAL_DIRECTION, stroke,
                                         n_samples, settings)
        return stiffness_index(curve, stroke)

    total = _count_layouts(problem)
    if total <= EXHAUSTIVE_LIMIT:
        candidates = [(rho, placements) for rho, placements in _enumerate_layouts(problem)
                      if _layout_pressure(problem, rho) <= budget]
        if jobs is None:
            jobs = min(8, os.cpu_count() or 1)
        if jobs <= 1:
            ks = [evaluate(rho, pl) for rho, pl in candidates]
        else:
            with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
                ks = list(pool.map(lambda c: evaluate(*c), candidates))
        ranked = sorted(
            zip(ks, candidates),
            key=lambda item: (item[0],
                              *_tie_break_key(problem.base_spec.length, item[1][0],
                                              item[1][1])))
        best_k, (best_rho, best_placements) = ranked[0]
        evaluated = len(candidates)
        mode = "exhaustive"
    else:
        best_k, best_rho, best_placements, evaluated = _greedy_search(
            problem, mat, settings, evaluate)
        mode = "greedy"

    bands = (tuple(BandSpec(d, best_rho) for d in best_placements)
             if best_placements else ())
    pressure = _layout_pressure(problem, best_rho)
    return DesignResult(bands=bands, predicted_k=best_k,
                        predicted_eversion_kpa=pressure,
                        fabrication=fabrication_sheet(bands, problem.base_spec),
                        layouts_evaluated=evaluated, search_mode=mode)


def _greedy_search(problem: DesignProblem, mat, settings, evaluate):
    """Per-ratio greedy build-up: repeatedly add the band that lowers k most."""
    budget = problem.pressure_budget_kpa
    evaluated = 0
    base_k = evaluate(None, ())
    evaluated += 1
    best = (base_k, None, ())

    for rho in problem.rho_candidates:
        if rho == 0.0 or _layout_pressure(problem, rho) > budget:
            continue
        chosen: tuple[float, ...] = ()
        current_k = base_k
        while len(chosen) < problem.max_bands:
            options = [d for d in problem.placement_grid if d not in chosen
                       and all(abs(d - c) >= problem.min_spacing - 1e-12 for c in chosen)]
            if not options:
                break
            trial = []
            for d in options:
                placements = tuple(sorted(chosen + (d,)))
                k = evaluate(rho, placements)
                evaluated += 1
                trial.append((k, placements))
            trial.sort(key=lambda item: (item[0],
                                         *_tie_break_key(problem.base_spec.length,
                                                         rho, item[1])))
            k_new, placements_new = trial[0]
            if k_new >= current_k:
                break
            chosen, current_k = placements_new, k_new
        cand = (current_k, rho if chosen else None, chosen)
        key_best = (best[0], *_tie_break_key(problem.base_spec.length, best[1], best[2]))
        key_cand = (cand[0], *_tie_break_key(problem.base_spec.length, cand[1], cand[2]))
        if key_cand < key_best:
            best = cand

    return best[0], best[1], best[2], evaluated
