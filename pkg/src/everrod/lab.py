"""Virtual stiffness-characterization lab.

Replays the physical test protocol in simulation: the tip of a clamped,
pressurized rod is displaced laterally in small increments up to a 20 mm
stroke while the required force is recorded, and the stiffness index
k = (F(dx) - F(0)) / dx summarizes each curve as a full-stroke secant.

``run_characterization_battery`` builds the 19 distinct banded prototype
configurations that were physically characterized (band counts 0-4 at
half reduction; a single half-reduction band swept 30-100 mm from the
tip; a single band at 100 mm swept over reduction ratios 0.1-0.5; and
three 3-band layouts at 50 mm gaps with ratios 0.1-0.3), sweeps each,
and groups them into the three trend series: stiffness falling with band
count, with band distance from the tip, and with reduction ratio.
"""

from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass, field

import numpy as np

from .domain import BandSpec, MaterialModel, RodSpec, material_of, reference_rod
from .errors import DataError, SolverError, ValidationError
from .solver import LoadCase, RodState, SolverSettings, solve_imposed_displacement

LATERAL_DIRECTION = (1.0, 0.0, 0.0)
FULL_STROKE = 0.02
DEFAULT_SWEEP_SAMPLES = 21

CURVE_CSV_HEADER = "displacement_m,force_n"
BATTERY_CSV_HEADER = ("variant_id,band_count,placements_mm_from_tip,"
                      "reduction_ratio,k_n_per_m,terminal_force_n")


@dataclass(frozen=True)
class ForceDisplacementCurve:
    """Sampled (displacement, force) pairs from one displacement-controlled sweep."""

    samples: tuple[tuple[float, float], ...]
    spec_id: str = ""
    direction: tuple[float, float, float] = LATERAL_DIRECTION
    pressure: float = 0.0

    def __post_init__(self):
        if len(self.samples) < 2:
            raise ValidationError("a curve needs at least 2 samples")
        samples = tuple((float(x), float(f)) for x, f in self.samples)
        xs = [x for x, _ in samples]
        if xs[0] != 0.0:
            raise ValidationError(f"curve must start at zero displacement, got {xs[0]}")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValidationError("curve displacements must be strictly increasing")
        if samples[0][1] != 0.0:
            raise ValidationError(f"curve must start at zero force, got {samples[0][1]}")
        if any(f < 0.0 for _, f in samples):
            raise ValidationError("curve forces must be non-negative")
        object.__setattr__(self, "samples", samples)

    @property
    def displacements(self) -> np.ndarray:
        return np.array([x for x, _ in self.samples])

    @property
    def forces(self) -> np.ndarray:
        return np.array([f for _, f in self.samples])

    @property
    def terminal_force(self) -> float:
        return self.samples[-1][1]

    def force_at(self, x: float) -> float:
        """Force at a displacement, linearly interpolated between samples."""
        xs = self.displacements
        if not (xs[0] <= x <= xs[-1]):
            raise ValidationError(
                f"displacement {x} m outside curve support [{xs[0]}, {xs[-1]}] m")
        return float(np.interp(x, xs, self.forces))

    def to_csv_text(self) -> str:
        lines = [CURVE_CSV_HEADER]
        lines += [f"{x!r},{f!r}" for x, f in self.samples]
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as f:
            f.write(self.to_csv_text())


@dataclass(frozen=True)
class StiffnessResult:
    """A curve together with its full-stroke secant stiffness."""

    curve: ForceDisplacementCurve
    stiffness_index: float
    stroke: float


@dataclass(frozen=True)
class ExperimentBattery:
    """Named spec variants, their shared protocol, and per-variant results."""

    variants: tuple[tuple[str, RodSpec], ...]
    results: dict[str, StiffnessResult] = field(default_factory=dict)
    groups: tuple[tuple[str, tuple[str, ...]], ...] = ()
    stroke: float = FULL_STROKE

    def spec_for(self, variant_id: str) -> RodSpec:
        for vid, spec in self.variants:
            if vid == variant_id:
                return spec
        raise ValidationError(f"unknown battery variant {variant_id!r}")

    def k_for(self, variant_id: str) -> float:
        return self.results[variant_id].stiffness_index

    def to_csv_text(self) -> str:
        lines = [BATTERY_CSV_HEADER]
        for vid, spec in self.variants:
            res = self.results[vid]
            placements = ";".join(
                f"{b.distance_from_tip * 1e3:g}"
                for b in sorted(spec.bands, key=lambda b: b.distance_from_tip))
            rhos = {b.reduction_ratio for b in spec.bands}
            rho = f"{rhos.pop()!r}" if len(rhos) == 1 else ""
            lines.append(",".join([
                vid, str(len(spec.bands)), placements, rho,
                repr(float(res.stiffness_index)), repr(float(res.curve.terminal_force))]))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as f:
            f.write(self.to_csv_text())


def spec_label(spec: RodSpec) -> str:
    """Deterministic short identifier for curve metadata."""
    if not spec.bands:
        return f"unbanded-L{spec.length * 1e3:g}mm"
    parts = [f"{b.distance_from_tip * 1e3:g}@{b.reduction_ratio:g}" for b in
             sorted(spec.bands, key=lambda b: b.distance_from_tip)]
    return f"bands[{','.join(parts)}]-L{spec.length * 1e3:g}mm"


def sweep_force_displacement(spec: RodSpec, mat: MaterialModel | None, direction,
                             dx_max: float, n_samples: int,
                             settings: SolverSettings) -> ForceDisplacementCurve:
    """Displacement-controlled tip sweep over [0, dx_max].

    Solves the imposed-displacement problem at evenly spaced targets,
    warm-starting each solve (base moment and force bracket) from the
    previous equilibrium.
    """
    mat = material_of(spec, mat)
    if dx_max <= 0.0:
        raise ValidationError(f"dx_max must be positive, got {dx_max}")
    if n_samples < 2:
        raise ValidationError(f"n_samples must be >= 2, got {n_samples}")

    targets = np.linspace(0.0, dx_max, n_samples)
    samples = [(0.0, 0.0)]
    m0 = None
    f_prev: float | None = None
    x_prev = 0.0
    for x in targets[1:]:
        load = LoadCase.imposed_displacement(spec.length, direction, float(x))
        f_guess = None
        if f_prev is not None and f_prev > 0.0 and x_prev > 0.0:
            # linear extrapolation of the force, padded a little so the
            # first trial usually lands above the target
            f_guess = f_prev * (x / x_prev) * 1.05
        try:
            state, force = solve_imposed_displacement(
                spec, mat, load, settings, f_guess=f_guess, m0_guess=m0)
        except SolverError as exc:
            raise type(exc)(f"sweep failed at displacement {x:.6g} m: {exc}") from exc
        m0 = state.m[0].copy()
        f_prev, x_prev = force, float(x)
        samples.append((float(x), force))

    return ForceDisplacementCurve(samples=tuple(samples), spec_id=spec_label(spec),
                                  direction=tuple(float(c) for c in
                                                  np.asarray(direction, dtype=float)),
                                  pressure=spec.internal_pressure)


def stiffness_index(curve: ForceDisplacementCurve, dx: float) -> float:
    """Full-stroke secant stiffness (F(dx) - F(0)) / dx in N/m."""
    if dx <= 0.0:
        raise ValidationError(f"stroke dx must be positive, got {dx}")
    return float((curve.force_at(dx) - curve.forces[0]) / dx)


def characterization_variants(base: RodSpec | None = None
                              ) -> tuple[tuple[tuple[str, RodSpec], ...],
                                         tuple[tuple[str, tuple[str, ...]], ...]]:
    """The 19 distinct characterized prototypes and their trend groupings."""
    if base is None:
        base = reference_rod()
    mm = 1e-3

    def banded(placements_mm, rho):
        return base.with_bands(tuple(BandSpec(d * mm, rho) for d in placements_mm))

    variants: list[tuple[str, RodSpec]] = [("unbanded", base)]
    count_ids = ["unbanded"]
    multi = {1: (50,), 2: (50, 100), 3: (50, 100, 150), 4: (50, 100, 150, 200)}
    for count, placements in multi.items():
        vid = f"m{count}-" + "-".join(str(p) for p in placements) + "-r50"
        if count == 1:
            vid = "s50mm-r50"  # same prototype appears in the position series
        variants.append((vid, banded(placements, 0.5)))
        count_ids.append(vid)

    position_ids = ["unbanded"]
    for d in (30, 40, 50, 60, 70, 80, 90, 100):
        vid = f"s{d}mm-r50"
        if all(v[0] != vid for v in variants):
            variants.append((vid, banded((d,), 0.5)))
        position_ids.append(vid)

    ratio_ids = ["unbanded"]
    for rho_pct in (10, 20, 30, 40, 50):
        vid = f"s100mm-r{rho_pct}"
        if all(v[0] != vid for v in variants):
            variants.append((vid, banded((100,), rho_pct / 100.0)))
        ratio_ids.append(vid)

    validation_ids = []
    for rho_pct in (10, 20, 30):
        vid = f"m3-50-100-150-r{rho_pct}"
        variants.append((vid, banded((50, 100, 150), rho_pct / 100.0)))
        validation_ids.append(vid)

    groups = (("band_count", tuple(count_ids)),
              ("band_position", tuple(position_ids)),
              ("reduction_ratio", tuple(ratio_ids)),
              ("validation", tuple(validation_ids)))
    return tuple(variants), groups


def run_characterization_battery(mat: MaterialModel | None, settings: SolverSettings, *,
                                 base: RodSpec | None = None, stroke: float = FULL_STROKE,
                                 n_samples: int = DEFAULT_SWEEP_SAMPLES,
                                 jobs: int | None = None) -> ExperimentBattery:
    """Sweep every characterized prototype and report its stiffness index.

    Variants run concurrently (each sweep itself stays sequential for its
    warm-start chain); results are keyed by variant id, so the outcome is
    independent of scheduling order.
    """
    if base is None:
        base = reference_rod()
    mat = material_of(base, mat)
    variants, groups = characterization_variants(base)

    def run_one(item: tuple[str, RodSpec]) -> tuple[str, StiffnessResult]:
        vid, spec = item
        curve = sweep_force_displacement(spec, mat, LATERAL_DIRECTION, stroke,
                                         n_samples, settings)
        return vid, StiffnessResult(curve=curve, stiffness_index=stiffness_index(curve, stroke),
                                    stroke=stroke)

    if jobs is None:
        jobs = min(8, os.cpu_count() or 1)
    results: dict[str, StiffnessResult] = {}
    if jobs <= 1:
        for item in variants:
            vid, res = run_one(item)
            results[vid] = res
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            for vid, res in pool.map(run_one, variants):
                results[vid] = res

    return ExperimentBattery(variants=variants, results=results, groups=groups,
                             stroke=stroke)


def ordering_violations(battery: ExperimentBattery) -> list[str]:
    """Trend-series entries whose stiffness fails to decrease strictly."""
    violations = []
    for name, ids in battery.groups:
        if name == "validation":
            continue  # no ordering claim for the mixed validation layouts
        ks = [battery.k_for(vid) for vid in ids]
        for (id_a, k_a), (id_b, k_b) in zip(zip(ids, ks), zip(ids[1:], ks[1:])):
            if not k_a > k_b:
                violations.append(
                    f"{name}: k({id_a}) = {k_a:.6g} N/m not above k({id_b}) = {k_b:.6g} N/m")
    return violations


def read_curve_csv_text(text: str, *, spec_id: str = "", pressure: float = 0.0,
                        direction=LATERAL_DIRECTION) -> ForceDisplacementCurve:
    """Parse a curve from `displacement_m,force_n` CSV text."""
    samples = _parse_two_column_csv(text, CURVE_CSV_HEADER)
    return ForceDisplacementCurve(samples=tuple(samples), spec_id=spec_id,
                                  pressure=pressure, direction=direction)


def _parse_two_column_csv(text: str, expected_header: str) -> list[tuple[float, float]]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError("empty CSV document")
    if lines[0].replace(" ", "") != expected_header:
        raise DataError(f"expected CSV header {expected_header!r}, got {lines[0]!r}")
    rows = []
    for idx, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 2:
            raise DataError(f"line {idx}: expected 2 comma-separated values, got {ln!r}")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise DataError(f"line {idx}: non-numeric value in {ln!r}") from exc
    if not rows:
        raise DataError("CSV has a header but no data rows")
    return rows
