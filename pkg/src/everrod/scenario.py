"""Versioned JSON scenario documents.

One document describes a run: rod geometry, material, a load protocol or
battery/design request, and solver settings.  Parsing is strict: unknown
fields are rejected with their JSON path, types are checked, and every
quantity is SI except pressures, which are kilopascals exactly where the
field name carries a ``_kpa`` suffix.

The canonical digest of a parsed document (sha256 over a key-sorted
serialization) is embedded in run reports so mismatched re-runs are
detectable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .calibration import EversionPressureModel, fit_eversion_pressure
from .designer import DesignProblem
from .domain import (
    BandSpec,
    MaterialModel,
    RodSpec,
    reference_material,
    reference_rod,
)
from .errors import ScenarioError, ValidationError
from .solver import SolverSettings

SCHEMA_VERSION = "1"

PROTOCOL_KINDS = ("point_force", "imposed_displacement", "sweep")


@dataclass(frozen=True)
class Protocol:
    """Normalized load protocol from a scenario document."""

    kind: str
    station: float
    direction: tuple[float, float, float]
    amount: float          # force (N), displacement (m), or max stroke (m)
    samples: int = 21


@dataclass(frozen=True)
class BatteryRequest:
    variant_ids: tuple[str, ...] | None
    stroke: float = 0.02
    samples: int = 21


@dataclass(frozen=True)
class Scenario:
    version: str
    rod: RodSpec
    material: MaterialModel
    settings: SolverSettings
    protocol: Protocol | None
    battery: BatteryRequest | None
    design: DesignProblem | None
    digest: str


class _Node:
    """One mapping in the document, consumed field by field."""

    def __init__(self, obj, path: str):
        if not isinstance(obj, dict):
            raise ScenarioError(f"{path}: expected a JSON object, got {type(obj).__name__}")
        self.obj = dict(obj)
        self.path = path

    def take(self, name: str, kind, *, required: bool = False, default=None):
        if name not in self.obj:
            if required:
                raise ScenarioError(f"{self.path}: missing required field {name!r}")
            return default
        value = self.obj.pop(name)
        return _coerce(value, kind, f"{self.path}.{name}")

    def subnode(self, name: str, *, required: bool = False) -> "_Node | None":
        if name not in self.obj:
            if required:
                raise ScenarioError(f"{self.path}: missing required section {name!r}")
            return None
        return _Node(self.obj.pop(name), f"{self.path}.{name}")

    def finish(self) -> None:
        if self.obj:
            names = ", ".join(sorted(repr(k) for k in self.obj))
            raise ScenarioError(f"{self.path}: unknown field(s) {names}")


def _coerce(value, kind, path: str):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScenarioError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ScenarioError(f"{path}: expected a string, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ScenarioError(f"{path}: expected an array, got {value!r}")
        return value
    if kind is dict:
        if not isinstance(value, dict):
            raise ScenarioError(f"{path}: expected an object, got {value!r}")
        return value
    raise AssertionError(f"unsupported coercion {kind}")


def _number_pairs(raw, path: str) -> tuple[tuple[float, float], ...]:
    pairs = []
    for i, entry in enumerate(raw):
        if not (isinstance(entry, list) and len(entry) == 2):
            raise ScenarioError(f"{path}[{i}]: expected a [number, number] pair")
        pairs.append((_coerce(entry[0], float, f"{path}[{i}][0]"),
                      _coerce(entry[1], float, f"{path}[{i}][1]")))
    return tuple(pairs)


def _vector3(raw, path: str) -> tuple[float, float, float]:
    if not (isinstance(raw, list) and len(raw) == 3):
        raise ScenarioError(f"{path}: expected a 3-element array")
    return tuple(_coerce(v, float, f"{path}[{i}]") for i, v in enumerate(raw))


def parse_material(node: _Node) -> MaterialModel:
    e_eff = node.take("e_eff_ref_pa", float, required=True)
    p_ref = node.take("p_ref_kpa", float, required=True) * 1e3
    nu = node.take("poisson_ratio", float, default=0.4)
    alpha_raw = node.take("alpha_table", list)
    modulus_raw = node.take("modulus_table_kpa_pa", list)
    node.finish()
    kwargs = {}
    if alpha_raw is not None:
        kwargs["alpha_table"] = _number_pairs(alpha_raw, f"{node.path}.alpha_table")
    if modulus_raw is not None:
        pairs = _number_pairs(modulus_raw, f"{node.path}.modulus_table_kpa_pa")
        kwargs["modulus_table"] = tuple((p_kpa * 1e3, e) for p_kpa, e in pairs)
    try:
        return MaterialModel(E_eff_ref=e_eff, p_ref=p_ref, poisson_ratio=nu, **kwargs)
    except ValidationError as exc:
        raise ScenarioError(f"{node.path}: {exc}") from exc


def parse_rod(node: _Node, material: MaterialModel) -> RodSpec:
    length = node.take("length_m", float, required=True)
    r0 = node.take("base_radius_m", float, required=True)
    t = node.take("wall_thickness_m", float, required=True)
    pressure = node.take("internal_pressure_kpa", float, required=True) * 1e3
    bands_raw = node.take("bands", list, default=[])
    node.finish()
    bands = []
    for i, entry in enumerate(bands_raw):
        bn = _Node(entry, f"{node.path}.bands[{i}]")
        d = bn.take("distance_from_tip_m", float, required=True)
        rho = bn.take("reduction_ratio", float, required=True)
        width = bn.take("width_m", float, default=0.015)
        bn.finish()
        try:
            bands.append(BandSpec(distance_from_tip=d, reduction_ratio=rho, width=width))
        except ValidationError as exc:
            raise ScenarioError(f"{bn.path}: {exc}") from exc
    try:
        return RodSpec(length=length, base_radius=r0, wall_thickness=t,
                       bands=tuple(bands), internal_pressure=pressure,
                       material=material)
    except ValidationError as exc:
        raise ScenarioError(f"{node.path}: {exc}") from exc


def parse_settings(node: _Node | None) -> SolverSettings:
    if node is None:
        return SolverSettings()
    kwargs = {}
    grid = node.take("grid_nodes", int)
    if grid is not None:
        kwargs["grid_nodes"] = grid
    tol_m = node.take("shooting_tol_nm", float)
    if tol_m is not None:
        kwargs["shooting_tol"] = tol_m
    max_it = node.take("max_shooting_iterations", int)
    if max_it is not None:
        kwargs["max_shooting_iterations"] = max_it
    tol_x = node.take("displacement_tol_m", float)
    if tol_x is not None:
        kwargs["displacement_tol"] = tol_x
    f_max = node.take("max_force_n", float)
    if f_max is not None:
        kwargs["max_force"] = f_max
    node.finish()
    try:
        return SolverSettings(**kwargs)
    except ValidationError as exc:
        raise ScenarioError(f"{node.path}: {exc}") from exc


def parse_protocol(node: _Node, rod: RodSpec) -> Protocol:
    kind = node.take("kind", str, required=True)
    if kind not in PROTOCOL_KINDS:
        raise ScenarioError(f"{node.path}.kind: expected one of {PROTOCOL_KINDS}, got {kind!r}")
    station = node.take("station_m", float, default=rod.length)
    direction_raw = node.obj.pop("direction", None)
    direction = (_vector3(direction_raw, f"{node.path}.direction")
                 if direction_raw is not None else (1.0, 0.0, 0.0))
    samples = node.take("samples", int, default=21)
    if kind == "point_force":
        amount = node.take("force_n", float, required=True)
    elif kind == "imposed_displacement":
        amount = node.take("displacement_m", float, required=True)
    else:
        amount = node.take("max_displacement_m", float, required=True)
    node.finish()
    if amount < 0.0:
        raise ScenarioError(f"{node.path}: load amount must be >= 0, got {amount}")
    if samples < 2:
        raise ScenarioError(f"{node.path}.samples: need at least 2, got {samples}")
    return Protocol(kind=kind, station=station, direction=direction,
                    amount=amount, samples=samples)


def parse_battery(node: _Node) -> BatteryRequest:
    variants_raw = node.take("variants", list)
    stroke = node.take("stroke_m", float, default=0.02)
    samples = node.take("samples", int, default=21)
    node.finish()
    variant_ids = None
    if variants_raw is not None:
        variant_ids = tuple(_coerce(v, str, f"{node.path}.variants[{i}]")
                            for i, v in enumerate(variants_raw))
        if not variant_ids:
            raise ScenarioError(f"{node.path}.variants: empty variant list")
    if stroke <= 0.0:
        raise ScenarioError(f"{node.path}.stroke_m: must be positive, got {stroke}")
    if samples < 2:
        raise ScenarioError(f"{node.path}.samples: need at least 2, got {samples}")
    return BatteryRequest(variant_ids=variant_ids, stroke=stroke, samples=samples)


def parse_design(node: _Node, rod: RodSpec, material: MaterialModel) -> DesignProblem:
    max_bands = node.take("max_bands", int, required=True)
    grid_raw = node.take("placement_grid_m_from_tip", list, required=True)
    grid = tuple(_coerce(v, float, f"{node.path}.placement_grid_m_from_tip[{i}]")
                 for i, v in enumerate(grid_raw))
    rho_raw = node.take("rho_candidates", list, required=True)
    rhos = tuple(_coerce(v, float, f"{node.path}.rho_candidates[{i}]")
                 for i, v in enumerate(rho_raw))
    budget = node.take("pressure_budget_kpa", float, required=True)
    min_spacing = node.take("min_spacing_m", float, default=0.015)
    model_node = node.subnode("eversion_model")
    points_raw = node.take("eversion_points", list)
    node.finish()

    if (model_node is None) == (points_raw is None):
        raise ScenarioError(f"{node.path}: provide exactly one of 'eversion_model' "
                            "and 'eversion_points'")
    if model_node is not None:
        p0 = model_node.take("p0_kpa", float, required=True)
        c = model_node.take("c", float, required=True)
        model_node.finish()
        try:
            model = EversionPressureModel(p0_kpa=p0, c=c)
        except ValidationError as exc:
            raise ScenarioError(f"{model_node.path}: {exc}") from exc
    else:
        pairs = _number_pairs(points_raw, f"{node.path}.eversion_points")
        model = fit_eversion_pressure(pairs)

    try:
        return DesignProblem(base_spec=rod, max_bands=max_bands, placement_grid=grid,
                             rho_candidates=rhos, pressure_budget_kpa=budget,
                             eversion_model=model, min_spacing=min_spacing)
    except ValidationError as exc:
        raise ScenarioError(f"{node.path}: {exc}") from exc


def canonical_digest(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def parse_scenario_text(text: str, *, source: str = "<scenario>") -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{source}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    digest = canonical_digest(doc)
    root = _Node(doc, source)
    version = root.take("schema_version", str, required=True)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"{source}: unsupported schema_version {version!r} "
                            f"(this build reads {SCHEMA_VERSION!r})")

    material_node = root.subnode("material")
    material = parse_material(material_node) if material_node else reference_material()

    rod_node = root.subnode("rod")
    rod = parse_rod(rod_node, material) if rod_node else reference_rod(material=material)

    settings = parse_settings(root.subnode("settings"))

    protocol_node = root.subnode("protocol")
    battery_node = root.subnode("battery")
    design_node = root.subnode("design")
    root.finish()

    sections = [n for n, present in (("protocol", protocol_node),
                                     ("battery", battery_node),
                                     ("design", design_node)) if present]
    if len(sections) != 1:
        raise ScenarioError(f"{source}: provide exactly one of 'protocol', 'battery', "
                            f"'design' (found {sections or 'none'})")

    protocol = parse_protocol(protocol_node, rod) if protocol_node else None
    battery = parse_battery(battery_node) if battery_node else None
    design = parse_design(design_node, rod, material) if design_node else None
    if design is not None and rod.bands:
        raise ScenarioError(f"{source}: design runs need a band-free rod")

    return Scenario(version=version, rod=rod, material=material, settings=settings,
                    protocol=protocol, battery=battery, design=design, digest=digest)


def load_scenario(path) -> Scenario:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario_text(text, source=str(path))


def material_to_doc(mat: MaterialModel) -> dict:
    doc = {
        "e_eff_ref_pa": mat.E_eff_ref,
        "p_ref_kpa": mat.p_ref / 1e3,
        "poisson_ratio": mat.poisson_ratio,
        "alpha_table": [list(p) for p in mat.alpha_table],
    }
    if len(mat.modulus_table) > 1:
        doc["modulus_table_kpa_pa"] = [[p / 1e3, e] for p, e in mat.modulus_table]
    return doc


def rod_to_doc(spec: RodSpec) -> dict:
    return {
        "length_m": spec.length,
        "base_radius_m": spec.base_radius,
        "wall_thickness_m": spec.wall_thickness,
        "internal_pressure_kpa": spec.internal_pressure / 1e3,
        "bands": [{"distance_from_tip_m": b.distance_from_tip,
                   "reduction_ratio": b.reduction_ratio,
                   "width_m": b.width} for b in spec.bands],
    }
