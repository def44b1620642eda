"""Parameter identification from measured force-displacement data.

Three fits, matching how the physical prototypes were characterized:

* ``fit_effective_modulus``: the pressurized tube's effective modulus
  from unbanded curves (optionally co-fitting the free length as a
  nuisance parameter, since clamp-to-grip distance is rarely recorded).
* ``fit_alpha``: the band softening factor for one reduction ratio from
  banded curves, with the modulus held fixed.
* ``fit_eversion_pressure``: the empirical minimum-eversion-pressure law
  p(rho) = p0 * exp(c * rho), fitted as a linear regression of log
  pressure on reduction ratio.

The force-curve fits run the full rod solver inside the objective; they
accept any curves sampled on the standard lateral-tip protocol.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .domain import MaterialModel, RodSpec
from .errors import DataError, ValidationError
from .lab import LATERAL_DIRECTION, _parse_two_column_csv
from .numerics import levenberg_marquardt
from .solver import LoadCase, SolverSettings, solve_imposed_displacement

log = logging.getLogger(__name__)

EVERSION_CSV_HEADER = "reduction_ratio,pressure_kpa"
MEASURED_CSV_HEADER = "displacement_m,force_n"

# ratios above the largest calibrated eversion measurement carry a warning
EVERSION_CALIBRATED_MAX = 0.5
EVERSION_DOMAIN_MAX = 0.6


@dataclass(frozen=True)
class MeasuredCurve:
    """One measured force-displacement curve at a fixed pressure."""

    samples: tuple[tuple[float, float], ...]
    configuration: str = ""
    pressure: float = 0.0

    def __post_init__(self):
        samples = tuple((float(x), float(f)) for x, f in self.samples)
        if len(samples) < 5:
            raise ValidationError(f"measured curve needs >= 5 samples, got {len(samples)}")
        xs = [x for x, _ in samples]
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ValidationError("measured displacements must be non-decreasing")
        object.__setattr__(self, "samples", samples)

    @classmethod
    def from_csv_text(cls, text: str, *, configuration: str = "",
                      pressure: float = 0.0) -> "MeasuredCurve":
        rows = _parse_two_column_csv(text, MEASURED_CSV_HEADER)
        return cls(samples=tuple(rows), configuration=configuration, pressure=pressure)

    @classmethod
    def from_csv(cls, path, *, configuration: str = "", pressure: float = 0.0) -> "MeasuredCurve":
        with open(path) as f:
            return cls.from_csv_text(f.read(), configuration=configuration or str(path),
                                     pressure=pressure)


@dataclass(frozen=True)
class FitResult:
    """Identified parameters with units, plus iteration diagnostics."""

    parameters: tuple[tuple[str, float, str], ...]  # (name, value, unit)
    residual_norm: float
    iterations: int
    converged: bool
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if not math.isfinite(self.residual_norm):
            raise ValidationError("fit residual norm must be finite")

    def value(self, name: str) -> float:
        for pname, val, _ in self.parameters:
            if pname == name:
                return val
        raise KeyError(name)

    def to_json(self) -> str:
        doc = {
            "parameters": [{"name": n, "value": v, "unit": u}
                           for n, v, u in self.parameters],
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "notes": list(self.notes),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class EversionPressureModel:
    """Minimum eversion pressure law p(rho) = p0 * exp(c * rho), p in kPa."""

    p0_kpa: float
    c: float
    log_residuals: tuple[float, ...] = ()
    points: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if not (self.p0_kpa > 0.0 and math.isfinite(self.p0_kpa)):
            raise ValidationError(f"p0 must be positive, got {self.p0_kpa}")
        if not (self.c > 0.0 and math.isfinite(self.c)):
            raise ValidationError(f"growth rate c must be positive, got {self.c}")

    def predict(self, rho: float) -> "PressurePrediction":
        return predict_eversion_pressure(self, rho)

    def to_json(self) -> str:
        doc = {
            "model": "p0_kpa * exp(c * rho)",
            "p0_kpa": self.p0_kpa,
            "c": self.c,
            "points": [list(p) for p in self.points],
            "log_residuals": list(self.log_residuals),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


class PressurePrediction(float):
    """A predicted pressure in kPa; ``warning`` is set for extrapolations."""

    warning: str | None

    def __new__(cls, value: float, warning: str | None = None):
        obj = super().__new__(cls, value)
        obj.warning = warning
        return obj


def _sweep_residuals(spec: RodSpec, mat: MaterialModel, curve: MeasuredCurve,
                     settings: SolverSettings) -> np.ndarray:
    """Model-minus-measured force at each positive measured displacement."""
    res = []
    m0 = None
    f_prev = x_prev = 0.0
    for x, f_meas in curve.samples:
        if x <= 0.0:
            res.append(0.0 - f_meas)
            continue
        load = LoadCase.imposed_displacement(spec.length, LATERAL_DIRECTION, x)
        f_guess = f_prev * (x / x_prev) * 1.05 if f_prev > 0.0 and x_prev > 0.0 else None
        state, force = solve_imposed_displacement(spec, mat, load, settings,
                                                  f_guess=f_guess, m0_guess=m0)
        m0 = state.m[0].copy()
        f_prev, x_prev = force, x
        res.append(force - f_meas)
    return np.array(res)


def _validate_curves(curves, spec: RodSpec) -> None:
    if not curves:
        raise DataError("no measured curves supplied")
    if all(max(abs(f) for _, f in c.samples) == 0.0 for c in curves):
        raise DataError("degenerate data: every measured force is zero")
    pressures = {c.pressure for c in curves}
    if len(pressures) > 1:
        raise ValidationError(f"curves span multiple pressures {sorted(pressures)}; "
                              "fit one pressure at a time")
    p = pressures.pop()
    if p > 0.0 and not math.isclose(p, spec.internal_pressure, rel_tol=1e-9):
        log.warning("curve pressure %.6g Pa differs from rod pressure %.6g Pa; "
                    "fitting at the rod pressure", p, spec.internal_pressure)


def fit_effective_modulus(curves, spec: RodSpec, settings: SolverSettings, *,
                          fit_length: bool = False,
                          base_material: MaterialModel | None = None) -> FitResult:
    """Identify the effective modulus from unbanded measured curves.

    Minimizes squared force residuals over all samples of all curves.
    With ``fit_length`` the free length is co-fitted; a single test
    geometry leaves the pair nearly unidentifiable (stiffness tracks
    E/L^3), so treat the co-fitted values as a consistency check only.
    """
    if spec.bands:
        raise ValidationError("fit_effective_modulus expects a band-free spec")
    _validate_curves(curves, spec)
    base = base_material if base_material is not None else spec.material
    if base is None:
        from .domain import reference_material
        base = reference_material()

    # start from the secant stiffness of the first curve: k ~ 3 E I / L^3
    ref_curve = curves[0]
    xs, fs = zip(*ref_curve.samples)
    k0 = (fs[-1] - fs[0]) / (xs[-1] - xs[0]) if xs[-1] > xs[0] else 0.0
    second = math.pi * spec.base_radius ** 3 * spec.wall_thickness
    e0 = k0 * spec.length ** 3 / (3.0 * second) if k0 > 0 else base.E_eff_ref
    if not (e0 > 0.0 and math.isfinite(e0)):
        e0 = base.E_eff_ref
    l0 = spec.length

    def build(theta):
        e = theta[0] * e0
        length = theta[1] * l0 if fit_length else l0
        mat = dataclasses.replace(base, E_eff_ref=e, p_ref=spec.internal_pressure,
                                  modulus_table=((spec.internal_pressure, e),))
        sp = RodSpec(length=length, base_radius=spec.base_radius,
                     wall_thickness=spec.wall_thickness, bands=(),
                     internal_pressure=spec.internal_pressure, material=mat)
        return sp, mat

    def residual(theta):
        sp, mat = build(theta)
        return np.concatenate([_sweep_residuals(sp, mat, c, settings) for c in curves])

    x0 = [1.0, 1.0] if fit_length else [1.0]
    bounds = [(1e-3, 1e3)] + ([(0.2, 5.0)] if fit_length else [])
    out = levenberg_marquardt(residual, x0, bounds=bounds, step_tol=1e-6,
                              max_iterations=60)

    params = [("E_eff", float(out.x[0] * e0), "Pa")]
    notes: list[str] = []
    if fit_length:
        params.append(("length", float(out.x[1] * l0), "m"))
        notes.append("length co-fitted as a nuisance parameter; E_eff and length "
                     "are nearly collinear from a single geometry")
    return FitResult(parameters=tuple(params), residual_norm=out.residual_norm,
                     iterations=out.iterations, converged=out.converged,
                     notes=tuple(notes))


def fit_alpha(curves, spec: RodSpec, mat: MaterialModel,
              settings: SolverSettings) -> FitResult:
    """Identify the softening factor alpha for the rod's (single) band ratio.

    The effective modulus stays fixed at the material's identified value;
    only alpha for the shared reduction ratio moves.  An optimum pinned at
    alpha = 1 is flagged: the data shows no measurable softening.
    """
    _validate_curves(curves, spec)
    rhos = {b.reduction_ratio for b in spec.bands}
    if not spec.bands:
        log.warning("fit_alpha called with an unbanded spec; alpha is unidentifiable")
        return FitResult(parameters=(("alpha", 1.0, ""),), residual_norm=0.0,
                         iterations=0, converged=True,
                         notes=("boundary: spec has no bands, nothing to soften",))
    if len(rhos) != 1:
        raise ValidationError(f"fit_alpha needs a single shared reduction ratio, got {sorted(rhos)}")
    rho = rhos.pop()

    def build(alpha):
        table = ((0.0, 1.0), (rho, float(alpha)))
        return dataclasses.replace(mat, alpha_table=table)

    def residual(theta):
        m = build(theta[0])
        return np.concatenate([_sweep_residuals(spec, m, c, settings) for c in curves])

    out = levenberg_marquardt(residual, [0.5], bounds=[(1e-3, 1.0)], step_tol=1e-6,
                              max_iterations=60)
    alpha = float(out.x[0])
    notes = []
    if alpha >= 1.0 - 1e-9:
        notes.append("boundary: optimum at alpha = 1 (no measurable softening)")
    return FitResult(parameters=(("alpha", alpha, ""),), residual_norm=out.residual_norm,
                     iterations=out.iterations, converged=out.converged,
                     notes=tuple(notes))


def fit_eversion_pressure(points) -> EversionPressureModel:
    """Fit p(rho) = p0 * exp(c * rho) to (rho, median pressure kPa) points.

    Ordinary least squares of ln p on rho; the log-space residuals have
    zero mean by the normal equations.
    """
    pts = [(float(r), float(p)) for r, p in points]
    if len(pts) < 3:
        raise DataError(f"need at least 3 (rho, pressure) points, got {len(pts)}")
    rhos = [r for r, _ in pts]
    if len(set(rhos)) != len(rhos):
        raise DataError("duplicate reduction ratios in eversion data")
    if any(p <= 0.0 for _, p in pts):
        raise DataError("eversion pressures must be positive")

    r = np.array(rhos)
    y = np.log([p for _, p in pts])
    r_mean = r.mean()
    y_mean = y.mean()
    denom = float(((r - r_mean) ** 2).sum())
    if denom == 0.0:
        raise DataError("reduction ratios are all equal; slope undefined")
    c = float(((r - r_mean) * (y - y_mean)).sum() / denom)
    ln_p0 = y_mean - c * r_mean
    if c <= 0.0:
        raise DataError(f"fitted growth rate is not positive (c = {c:.3g}); "
                        "data does not show pressure rising with restriction")
    residuals = y - (ln_p0 + c * r)
    return EversionPressureModel(p0_kpa=float(math.exp(ln_p0)), c=c,
                                 log_residuals=tuple(float(v) for v in residuals),
                                 points=tuple(pts))


def predict_eversion_pressure(model: EversionPressureModel, rho: float) -> PressurePrediction:
    """Predicted minimum eversion pressure in kPa for a reduction ratio."""
    if not (0.0 <= rho <= EVERSION_DOMAIN_MAX):
        raise ValidationError(
            f"reduction ratio {rho} outside supported range [0, {EVERSION_DOMAIN_MAX}]")
    warning = None
    if rho > EVERSION_CALIBRATED_MAX:
        warning = (f"reduction ratio {rho} beyond the calibrated range "
                   f"(max {EVERSION_CALIBRATED_MAX}); prediction is an extrapolation")
        log.warning("%s", warning)
    return PressurePrediction(model.p0_kpa * math.exp(model.c * rho), warning)


def read_eversion_points_csv_text(text: str) -> tuple[tuple[float, float], ...]:
    """Parse (reduction_ratio, pressure_kpa) rows from CSV text."""
    rows = _parse_two_column_csv(text, EVERSION_CSV_HEADER)
    return tuple(rows)
