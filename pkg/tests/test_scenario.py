import json

import pytest

from everrod.domain import BandSpec, MaterialModel, RodSpec
from everrod.errors import ScenarioError
from everrod.scenario import (
    SCHEMA_VERSION,
    canonical_digest,
    material_to_doc,
    parse_scenario_text,
    rod_to_doc,
)


def doc(**sections):
    base = {"schema_version": SCHEMA_VERSION}
    base.update(sections)
    return base


def parse(document):
    return parse_scenario_text(json.dumps(document))


POINT_FORCE = {"kind": "point_force", "force_n": 0.05}


class TestDefaults:
    def test_minimal_document_uses_reference_prototype(self):
        sc = parse(doc(protocol=POINT_FORCE))
        assert sc.rod.length == 0.6
        assert sc.rod.base_radius == 0.020
        assert sc.material.E_eff_ref == 25.2e6
        assert sc.settings.grid_nodes == 600
        assert sc.protocol.kind == "point_force"
        assert sc.protocol.station == 0.6
        assert sc.protocol.direction == (1.0, 0.0, 0.0)
        assert sc.protocol.amount == 0.05
        assert sc.battery is None and sc.design is None

    def test_version_required_and_checked(self):
        with pytest.raises(ScenarioError, match="schema_version"):
            parse({"protocol": POINT_FORCE})
        with pytest.raises(ScenarioError, match="schema_version"):
            parse({"schema_version": "99", "protocol": POINT_FORCE})


class TestRodAndMaterial:
    def test_round_trip_through_docs(self):
        mat = MaterialModel(E_eff_ref=21.0e6, p_ref=5.0e3, poisson_ratio=0.35,
                            alpha_table=((0.0, 1.0), (0.5, 0.4)),
                            modulus_table=((4.0e3, 18.0e6), (8.0e3, 24.0e6)))
        rod = RodSpec(length=0.5, base_radius=0.015, wall_thickness=6e-5,
                      bands=(BandSpec(0.04, 0.25),), internal_pressure=5.0e3,
                      material=mat)
        sc = parse(doc(material=material_to_doc(mat), rod=rod_to_doc(rod),
                       protocol=POINT_FORCE))
        assert sc.material == mat
        assert sc.rod == rod

    def test_kpa_fields_scale_to_pascals(self):
        sc = parse(doc(rod={"length_m": 0.6, "base_radius_m": 0.02,
                            "wall_thickness_m": 5e-5, "internal_pressure_kpa": 6.9},
                       protocol=POINT_FORCE))
        assert sc.rod.internal_pressure == pytest.approx(6900.0, rel=1e-12)

    def test_modulus_table_kpa_conversion(self):
        sc = parse(doc(material={"e_eff_ref_pa": 25.2e6, "p_ref_kpa": 6.9,
                                 "modulus_table_kpa_pa": [[5.0, 2.0e7], [10.0, 3.0e7]]},
                       protocol=POINT_FORCE))
        assert sc.material.modulus_table == ((5000.0, 2.0e7), (10000.0, 3.0e7))

    def test_band_validation_points_at_path(self):
        bad = doc(rod={"length_m": 0.6, "base_radius_m": 0.02,
                       "wall_thickness_m": 5e-5, "internal_pressure_kpa": 6.9,
                       "bands": [{"distance_from_tip_m": 0.7,
                                  "reduction_ratio": 0.5}]},
                  protocol=POINT_FORCE)
        with pytest.raises(ScenarioError, match="rod"):
            parse(bad)

    def test_unknown_field_reports_json_path(self):
        bad = doc(rod={"length_m": 0.6, "base_radius_m": 0.02,
                       "wall_thickness_m": 5e-5, "internal_pressure_kpa": 6.9,
                       "bands": [{"distance_from_tip_m": 0.05,
                                  "reduction_ratio": 0.5, "colour": "red"}]},
                  protocol=POINT_FORCE)
        with pytest.raises(ScenarioError, match=r"bands\[0\].*colour"):
            parse(bad)

    def test_wrong_type_reports_field(self):
        with pytest.raises(ScenarioError, match="force_n"):
            parse(doc(protocol={"kind": "point_force", "force_n": "big"}))


class TestProtocol:
    def test_kind_checked(self):
        with pytest.raises(ScenarioError, match="kind"):
            parse(doc(protocol={"kind": "twist", "force_n": 1.0}))

    def test_amount_field_depends_on_kind(self):
        sc = parse(doc(protocol={"kind": "sweep", "max_displacement_m": 0.02,
                                 "samples": 5}))
        assert sc.protocol.amount == 0.02
        assert sc.protocol.samples == 5
        with pytest.raises(ScenarioError, match="displacement_m"):
            parse(doc(protocol={"kind": "imposed_displacement", "force_n": 1.0}))

    def test_negative_amount_rejected(self):
        with pytest.raises(ScenarioError, match="amount"):
            parse(doc(protocol={"kind": "point_force", "force_n": -1.0}))

    def test_direction_must_be_three_numbers(self):
        with pytest.raises(ScenarioError, match="direction"):
            parse(doc(protocol={"kind": "point_force", "force_n": 1.0,
                                "direction": [1.0, 0.0]}))

    def test_samples_floor(self):
        with pytest.raises(ScenarioError, match="samples"):
            parse(doc(protocol={"kind": "sweep", "max_displacement_m": 0.02,
                                "samples": 1}))


class TestSections:
    def test_exactly_one_job_section(self):
        with pytest.raises(ScenarioError, match="exactly one"):
            parse(doc())
        with pytest.raises(ScenarioError, match="exactly one"):
            parse(doc(protocol=POINT_FORCE,
                      battery={"stroke_m": 0.02}))

    def test_battery_parsing(self):
        sc = parse(doc(battery={"variants": ["unbanded", "s50mm-r50"],
                                "stroke_m": 0.01, "samples": 3}))
        assert sc.battery.variant_ids == ("unbanded", "s50mm-r50")
        assert sc.battery.stroke == 0.01
        with pytest.raises(ScenarioError, match="variants"):
            parse(doc(battery={"variants": []}))
        with pytest.raises(ScenarioError, match="stroke_m"):
            parse(doc(battery={"stroke_m": -0.01}))

    def test_design_parsing(self):
        sc = parse(doc(design={"max_bands": 2,
                               "placement_grid_m_from_tip": [0.05, 0.10],
                               "rho_candidates": [0.3, 0.5],
                               "pressure_budget_kpa": 3.0,
                               "eversion_model": {"p0_kpa": 0.37, "c": 5.8}}))
        assert sc.design.max_bands == 2
        assert sc.design.eversion_model.p0_kpa == 0.37
        assert sc.design.pressure_budget_kpa == 3.0

    def test_design_accepts_raw_eversion_points(self):
        sc = parse(doc(design={"max_bands": 1,
                               "placement_grid_m_from_tip": [0.05],
                               "rho_candidates": [0.3],
                               "pressure_budget_kpa": 3.0,
                               "eversion_points": [[0.0, 0.46], [0.1, 0.62],
                                                    [0.2, 1.16], [0.3, 1.53],
                                                    [0.4, 3.39], [0.5, 9.01]]}))
        assert sc.design.eversion_model.p0_kpa == pytest.approx(0.3716, abs=1e-3)

    def test_design_needs_exactly_one_model_source(self):
        base = {"max_bands": 1, "placement_grid_m_from_tip": [0.05],
                "rho_candidates": [0.3], "pressure_budget_kpa": 3.0}
        with pytest.raises(ScenarioError, match="exactly one"):
            parse(doc(design=dict(base)))
        both = dict(base, eversion_model={"p0_kpa": 0.37, "c": 5.8},
                    eversion_points=[[0.0, 0.46], [0.1, 0.62], [0.2, 1.16]])
        with pytest.raises(ScenarioError, match="exactly one"):
            parse(doc(design=both))

    def test_design_requires_band_free_rod(self):
        bad = doc(rod={"length_m": 0.6, "base_radius_m": 0.02,
                       "wall_thickness_m": 5e-5, "internal_pressure_kpa": 6.9,
                       "bands": [{"distance_from_tip_m": 0.05,
                                  "reduction_ratio": 0.5}]},
                  design={"max_bands": 1, "placement_grid_m_from_tip": [0.10],
                          "rho_candidates": [0.3], "pressure_budget_kpa": 3.0,
                          "eversion_model": {"p0_kpa": 0.37, "c": 5.8}})
        with pytest.raises(ScenarioError, match="band-free"):
            parse(bad)


class TestSettings:
    def test_overrides_apply(self):
        sc = parse(doc(settings={"grid_nodes": 150, "shooting_tol_nm": 1e-8,
                                 "max_force_n": 10.0},
                       protocol=POINT_FORCE))
        assert sc.settings.grid_nodes == 150
        assert sc.settings.shooting_tol == 1e-8
        assert sc.settings.max_force == 10.0
        assert sc.settings.displacement_tol == 1e-6

    def test_invalid_settings_rejected_with_path(self):
        with pytest.raises(ScenarioError, match="settings"):
            parse(doc(settings={"grid_nodes": 30}, protocol=POINT_FORCE))

    def test_unknown_setting_rejected(self):
        with pytest.raises(ScenarioError, match="step_size"):
            parse(doc(settings={"step_size": 1}, protocol=POINT_FORCE))


class TestDocumentHandling:
    def test_malformed_json_reports_position(self):
        with pytest.raises(ScenarioError, match="line 1"):
            parse_scenario_text('{"schema_version": "1",,}')

    def test_digest_ignores_key_order_and_whitespace(self):
        a = json.dumps(doc(protocol=POINT_FORCE), indent=4)
        b = json.dumps({"protocol": POINT_FORCE, "schema_version": SCHEMA_VERSION})
        assert (parse_scenario_text(a).digest == parse_scenario_text(b).digest
                == canonical_digest(json.loads(a)))

    def test_digest_tracks_content(self):
        a = parse(doc(protocol=POINT_FORCE))
        b = parse(doc(protocol={"kind": "point_force", "force_n": 0.06}))
        assert a.digest != b.digest

    def test_root_unknown_field_rejected(self):
        with pytest.raises(ScenarioError, match="extra"):
            parse(doc(protocol=POINT_FORCE, extra=1))
