"""Physical domain model: rod geometry, band layout, and material laws.

All quantities are SI (meters, pascals, newtons).  Types are frozen
dataclasses: immutable after construction, hashable, and safe to share
across threads.  Geometry along the rod is parameterized by arc length
``s`` measured from the clamped base (``s = 0``) to the tip (``s = L``).

A constrictive band of reduction ratio ``rho`` drops the tube radius from
``r0`` to ``r0 * (1 - rho)`` over its 15 mm width as a step profile (no
taper), and scales the effective modulus by a calibrated factor
``alpha(rho) <= 1`` over the same support.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .errors import CalibrationMissingError, ValidationError

log = logging.getLogger(__name__)

# Reduction-ratio -> modulus-reduction-factor pairs identified for the
# reference 40 mm TPU tube at 6.9 kPa.  Piecewise-linear between entries.
DEFAULT_ALPHA_TABLE: tuple[tuple[float, float], ...] = (
    (0.0, 1.0),
    (0.1, 0.55),
    (0.2, 0.53),
    (0.3, 0.46),
    (0.4, 0.43),
    (0.5, 0.36),
)

# Reference prototype constants (40 mm diameter, 600 mm length, 0.05 mm TPU).
REFERENCE_LENGTH = 0.6
REFERENCE_RADIUS = 0.020
REFERENCE_WALL_THICKNESS = 5e-5
REFERENCE_PRESSURE = 6.9e3
REFERENCE_E_EFF = 25.2e6
DEFAULT_POISSON_RATIO = 0.4
DEFAULT_BAND_WIDTH = 0.015

_TOUCH_TOL = 1e-12


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


@dataclass(frozen=True)
class BandSpec:
    """One constrictive band, located by its center's distance from the tip."""

    distance_from_tip: float
    reduction_ratio: float
    width: float = DEFAULT_BAND_WIDTH

    def __post_init__(self):
        _require(math.isfinite(self.distance_from_tip) and self.distance_from_tip >= 0.0,
                 f"band distance_from_tip must be >= 0, got {self.distance_from_tip}")
        _require(0.0 <= self.reduction_ratio <= 0.6,
                 f"reduction_ratio must lie in [0, 0.6] (validated range), got {self.reduction_ratio}")
        _require(self.width > 0.0, f"band width must be positive, got {self.width}")

    def center_position(self, length: float) -> float:
        """Arc-length position of the band center on a rod of the given length."""
        return length - self.distance_from_tip

    def support(self, length: float) -> tuple[float, float]:
        """Closed arc-length interval covered by the band."""
        c = self.center_position(length)
        return (c - 0.5 * self.width, c + 0.5 * self.width)


@dataclass(frozen=True)
class MaterialModel:
    """Pressure-dependent effective modulus plus the band softening map.

    ``E_eff_ref`` is the effective modulus identified at ``p_ref``.  When
    ``modulus_table`` holds more than one (pressure, modulus) point the
    modulus is interpolated linearly in pressure and lookups outside the
    table raise; with the default single-point table the reference value
    applies at every pressure (a calibration gap, logged as a warning).
    Shear modulus is derived as G = E / (2 (1 + nu)); the band factor
    alpha scales G through E.
    """

    E_eff_ref: float
    p_ref: float
    poisson_ratio: float = DEFAULT_POISSON_RATIO
    alpha_table: tuple[tuple[float, float], ...] = DEFAULT_ALPHA_TABLE
    modulus_table: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        _require(self.E_eff_ref > 0.0, f"E_eff_ref must be positive, got {self.E_eff_ref}")
        _require(self.p_ref >= 0.0, f"p_ref must be non-negative, got {self.p_ref}")
        _require(0.0 <= self.poisson_ratio < 0.5,
                 f"poisson_ratio must lie in [0, 0.5), got {self.poisson_ratio}")
        table = tuple(sorted((float(r), float(a)) for r, a in self.alpha_table))
        _require(len(table) >= 1, "alpha_table must not be empty")
        rhos = [r for r, _ in table]
        _require(len(set(rhos)) == len(rhos), "alpha_table has duplicate reduction ratios")
        _require(any(r == 0.0 for r in rhos), "alpha_table must contain rho = 0")
        for r, a in table:
            _require(0.0 <= r, f"alpha_table rho must be >= 0, got {r}")
            _require(0.0 < a <= 1.0, f"alpha values must lie in (0, 1], got {a} at rho = {r}")
        _require(dict(table)[0.0] == 1.0, "alpha_table must map rho = 0 to alpha = 1")
        object.__setattr__(self, "alpha_table", table)

        mtable = tuple(sorted((float(p), float(e)) for p, e in self.modulus_table))
        if not mtable:
            mtable = ((float(self.p_ref), float(self.E_eff_ref)),)
        pressures = [p for p, _ in mtable]
        _require(len(set(pressures)) == len(pressures), "modulus_table has duplicate pressures")
        for p, e in mtable:
            _require(p >= 0.0, f"modulus_table pressure must be >= 0, got {p}")
            _require(e > 0.0, f"modulus_table modulus must be positive, got {e}")
        object.__setattr__(self, "modulus_table", mtable)

    def shear_from_youngs(self, e: float) -> float:
        return e / (2.0 * (1.0 + self.poisson_ratio))

    def modulus_at_pressure(self, pressure: float) -> float:
        """Effective modulus E_eff(p), linearly interpolated over the table."""
        table = self.modulus_table
        if len(table) == 1:
            if pressure != table[0][0]:
                log.warning(
                    "single-point modulus table: applying E_eff = %.6g Pa "
                    "(identified at %.6g Pa) at pressure %.6g Pa",
                    table[0][1], table[0][0], pressure)
            return table[0][1]
        lo_p, hi_p = table[0][0], table[-1][0]
        if not (lo_p <= pressure <= hi_p):
            raise CalibrationMissingError(
                f"pressure {pressure} Pa outside calibrated modulus range "
                f"[{lo_p}, {hi_p}] Pa")
        return _interp_sorted(table, pressure)

    def alpha_for(self, rho: float) -> float:
        """Softening factor for a reduction ratio, interpolated within the hull."""
        table = self.alpha_table
        if rho < table[0][0] or rho > table[-1][0]:
            raise CalibrationMissingError(
                f"reduction ratio {rho} outside calibrated alpha range "
                f"[{table[0][0]}, {table[-1][0]}]")
        return _interp_sorted(table, rho)


def _interp_sorted(table: tuple[tuple[float, float], ...], x: float) -> float:
    # table sorted by first element; x already bounds-checked
    for i in range(len(table) - 1):
        x0, y0 = table[i]
        x1, y1 = table[i + 1]
        if x <= x1:
            if x == x0:
                return y0
            w = (x - x0) / (x1 - x0)
            return y0 + w * (y1 - y0)
    return table[-1][1]


@dataclass(frozen=True)
class RodSpec:
    """Geometry, band layout, pressure, and material for one prototype."""

    length: float
    base_radius: float
    wall_thickness: float
    bands: tuple[BandSpec, ...] = ()
    internal_pressure: float = 0.0
    material: MaterialModel | None = None

    def __post_init__(self):
        _require(self.length > 0.0, f"length must be positive, got {self.length}")
        _require(self.base_radius > 0.0, f"base_radius must be positive, got {self.base_radius}")
        _require(0.0 < self.wall_thickness < self.base_radius,
                 f"wall_thickness must lie in (0, base_radius), got {self.wall_thickness}")
        _require(self.internal_pressure >= 0.0,
                 f"internal_pressure must be >= 0, got {self.internal_pressure}")
        bands = tuple(sorted(self.bands, key=lambda b: b.center_position(self.length)))
        for b in bands:
            lo, hi = b.support(self.length)
            _require(lo >= -_TOUCH_TOL and hi <= self.length + _TOUCH_TOL,
                     f"band centered {b.distance_from_tip} m from tip extends outside "
                     f"[0, {self.length}] (support [{lo:.6g}, {hi:.6g}])")
            _require(b.distance_from_tip <= self.length,
                     f"band distance_from_tip {b.distance_from_tip} exceeds rod length {self.length}")
        for a, b in zip(bands, bands[1:]):
            _require(a.support(self.length)[1] <= b.support(self.length)[0] + _TOUCH_TOL,
                     f"bands overlap: supports {a.support(self.length)} and {b.support(self.length)}")
        object.__setattr__(self, "bands", bands)

    def band_at(self, s: float) -> BandSpec | None:
        """Band whose closed support contains s, or None."""
        for b in self.bands:
            lo, hi = b.support(self.length)
            if lo <= s <= hi:
                return b
        return None

    def with_bands(self, bands) -> "RodSpec":
        return RodSpec(self.length, self.base_radius, self.wall_thickness,
                       tuple(bands), self.internal_pressure, self.material)


@dataclass(frozen=True)
class CrossSection:
    """Thin-wall section properties at one station: A = 2*pi*r*t, I = pi*r^3*t."""

    radius: float
    area: float
    second_moment: float

    def __post_init__(self):
        _require(self.radius > 0.0 and self.area > 0.0 and self.second_moment > 0.0,
                 "cross-section properties must be strictly positive")


@dataclass(frozen=True)
class StiffnessMatrices:
    """Diagonal constitutive stiffnesses: K_se = diag(GA, GA, EA), K_bt = diag(EI, EI, 2GI)."""

    k_se_diag: tuple[float, float, float]
    k_bt_diag: tuple[float, float, float]

    def __post_init__(self):
        for v in (*self.k_se_diag, *self.k_bt_diag):
            _require(math.isfinite(v) and v > 0.0,
                     f"stiffness entries must be finite and positive, got {v}")


def _check_station(spec: RodSpec, s: float) -> None:
    if not (0.0 <= s <= spec.length):
        raise ValidationError(f"arc length s = {s} outside rod domain [0, {spec.length}]")


def radius_profile(spec: RodSpec, s: float) -> float:
    """Tube radius at station s: r0 outside bands, r0 * (1 - rho) inside."""
    _check_station(spec, s)
    band = spec.band_at(s)
    if band is None:
        return spec.base_radius
    return spec.base_radius * (1.0 - band.reduction_ratio)


def cross_section_at(spec: RodSpec, s: float) -> CrossSection:
    """Thin-wall area and second moment from the local radius."""
    r = radius_profile(spec, s)
    t = spec.wall_thickness
    return CrossSection(radius=r, area=2.0 * math.pi * r * t,
                        second_moment=math.pi * r ** 3 * t)


def effective_modulus(mat: MaterialModel, spec: RodSpec, s: float) -> float:
    """Local modulus alpha(s) * E_eff(p): softened inside bands, full elsewhere."""
    _check_station(spec, s)
    e_eff = mat.modulus_at_pressure(spec.internal_pressure)
    band = spec.band_at(s)
    if band is None:
        return e_eff
    return mat.alpha_for(band.reduction_ratio) * e_eff


def stiffness_matrices_at(mat: MaterialModel, spec: RodSpec, s: float) -> StiffnessMatrices:
    """Constitutive stiffness diagonals from local modulus and section."""
    e = effective_modulus(mat, spec, s)
    g = mat.shear_from_youngs(e)
    sec = cross_section_at(spec, s)
    a, i = sec.area, sec.second_moment
    return StiffnessMatrices(k_se_diag=(g * a, g * a, e * a),
                             k_bt_diag=(e * i, e * i, 2.0 * g * i))


def material_of(spec: RodSpec, mat: MaterialModel | None = None) -> MaterialModel:
    """Resolve the material: explicit argument wins, else the rod's bundled one."""
    resolved = mat if mat is not None else spec.material
    if resolved is None:
        raise ValidationError("no material model: pass one explicitly or set RodSpec.material")
    return resolved


def reference_material() -> MaterialModel:
    """Material identified for the reference prototype at 6.9 kPa."""
    return MaterialModel(E_eff_ref=REFERENCE_E_EFF, p_ref=REFERENCE_PRESSURE)


def reference_rod(bands: tuple[BandSpec, ...] = (), *,
                  material: MaterialModel | None = None) -> RodSpec:
    """The 600 mm x 40 mm reference prototype, optionally banded."""
    return RodSpec(length=REFERENCE_LENGTH, base_radius=REFERENCE_RADIUS,
                   wall_thickness=REFERENCE_WALL_THICKNESS, bands=tuple(bands),
                   internal_pressure=REFERENCE_PRESSURE,
                   material=material if material is not None else reference_material())
