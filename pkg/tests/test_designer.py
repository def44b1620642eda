import math

import pytest

import everrod.designer as designer_mod
from everrod.calibration import EversionPressureModel
from everrod.designer import (
    DesignProblem,
    DesignResult,
    design_bands,
    fabrication_sheet,
)
from everrod.domain import BandSpec, reference_rod
from everrod.errors import InfeasibleDesignError, ValidationError

# frozen eversion law fitted to the measured medians (see test_calibration)
MODEL = EversionPressureModel(p0_kpa=0.37161849038037503, c=5.785075486539531)

CIRCUMFERENCE = math.pi * 2.0 * 0.020


def problem(**overrides):
    defaults = dict(base_spec=reference_rod(), max_bands=2,
                    placement_grid=(0.05, 0.10), rho_candidates=(0.1, 0.3, 0.5),
                    pressure_budget_kpa=10.0, eversion_model=MODEL)
    defaults.update(overrides)
    return DesignProblem(**defaults)


class TestFabricationSheet:
    def test_reference_dimensions(self, ref_rod):
        bands = (BandSpec(0.100, 0.2), BandSpec(0.050, 0.5))
        sheet = fabrication_sheet(bands, ref_rod)
        assert sheet.sheet_width == pytest.approx(CIRCUMFERENCE, rel=1e-12)
        assert sheet.sheet_length == 0.6
        assert sheet.strip_width == 0.015
        # strips come out sorted tip-first
        assert [d for d, _, _ in sheet.strips] == [0.050, 0.100]
        assert sheet.strips[0][2] == pytest.approx(CIRCUMFERENCE * 0.5, rel=1e-12)
        assert sheet.strips[1][2] == pytest.approx(CIRCUMFERENCE * 0.8, rel=1e-12)

    def test_zero_reduction_strip_spans_full_circumference(self, ref_rod):
        sheet = fabrication_sheet((BandSpec(0.050, 0.0),), ref_rod)
        assert sheet.strips[0][2] == sheet.sheet_width

    def test_text_rendering(self, ref_rod):
        sheet = fabrication_sheet((BandSpec(0.050, 0.5),), ref_rod)
        text = sheet.to_text()
        assert "125.7 mm wide x 600.0 mm long" in text
        assert "62.8 mm strip -> band at 50.0 mm from tip (reduction 50%)" in text

    def test_unbanded_sheet(self, ref_rod):
        sheet = fabrication_sheet((), ref_rod)
        assert sheet.strips == ()
        assert "none (unbanded layout)" in sheet.to_text()


class TestProblemValidation:
    def test_base_spec_must_be_band_free(self):
        with pytest.raises(ValidationError):
            problem(base_spec=reference_rod((BandSpec(0.05, 0.5),)))

    def test_budget_positive(self):
        with pytest.raises(ValidationError):
            problem(pressure_budget_kpa=0.0)

    def test_grid_placement_must_fit_band(self):
        with pytest.raises(ValidationError):
            problem(placement_grid=(0.0,))
        with pytest.raises(ValidationError):
            problem(placement_grid=(0.599,))

    def test_duplicate_grid_rejected(self):
        with pytest.raises(ValidationError):
            problem(placement_grid=(0.05, 0.05))

    def test_min_spacing_floor_is_band_width(self):
        with pytest.raises(ValidationError):
            problem(min_spacing=0.010)

    def test_rho_candidates_checked(self):
        with pytest.raises(ValidationError):
            problem(rho_candidates=())
        with pytest.raises(ValidationError):
            problem(rho_candidates=(0.3, 0.3))
        with pytest.raises(ValidationError):
            problem(rho_candidates=(0.7,))

    def test_alpha_hull_guard(self, ref_material, fast_settings):
        prob = problem(rho_candidates=(0.55,))
        with pytest.raises(ValidationError):
            design_bands(prob, ref_material, fast_settings)

    def test_search_mode_validated(self):
        sheet = fabrication_sheet((), reference_rod())
        with pytest.raises(ValidationError):
            DesignResult(bands=(), predicted_k=1.0, predicted_eversion_kpa=1.0,
                         fabrication=sheet, layouts_evaluated=1, search_mode="magic")


class TestDesignSearch:
    def test_infeasible_budget_raises(self, ref_material, fast_settings):
        prob = problem(pressure_budget_kpa=0.2)
        with pytest.raises(InfeasibleDesignError) as err:
            design_bands(prob, ref_material, fast_settings, jobs=1)
        assert err.value.exit_code == 4
        assert "pressure budget" in str(err.value)

    def test_budget_caps_reduction_ratio(self, ref_material, fast_settings):
        # 3 kPa admits rho = 0.3 (2.11 kPa predicted) but not 0.4+ (3.76 kPa)
        prob = problem(pressure_budget_kpa=3.0)
        result = design_bands(prob, ref_material, fast_settings, n_samples=2, jobs=4)
        assert result.bands
        assert max(b.reduction_ratio for b in result.bands) <= 0.3
        assert result.predicted_eversion_kpa <= 3.0
        assert result.search_mode == "exhaustive"

    def test_unconstrained_budget_uses_all_bands_at_max_ratio(self, ref_material,
                                                              fast_settings):
        prob = problem(pressure_budget_kpa=10.0)
        result = design_bands(prob, ref_material, fast_settings, n_samples=2, jobs=4)
        assert len(result.bands) == 2
        assert all(b.reduction_ratio == 0.5 for b in result.bands)
        # 1 empty layout + 3 ratios x (2 singles + 1 pair)
        assert result.layouts_evaluated == 10
        assert result.predicted_eversion_kpa == pytest.approx(
            float(MODEL.predict(0.5)), rel=1e-12)

    def test_determinism(self, ref_material, fast_settings):
        prob = problem(pressure_budget_kpa=10.0, rho_candidates=(0.3, 0.5))
        first = design_bands(prob, ref_material, fast_settings, n_samples=2, jobs=4)
        second = design_bands(prob, ref_material, fast_settings, n_samples=2, jobs=1)
        assert first.bands == second.bands
        assert first.predicted_k == second.predicted_k

    def test_zero_ratio_candidates_give_unbanded_layout(self, ref_material,
                                                        fast_settings):
        prob = problem(rho_candidates=(0.0,))
        result = design_bands(prob, ref_material, fast_settings, n_samples=2, jobs=1)
        assert result.bands == ()
        assert result.layouts_evaluated == 1
        assert result.predicted_eversion_kpa == MODEL.p0_kpa
        assert result.fabrication.strips == ()

    def test_banding_lowers_predicted_k(self, ref_material, fast_settings):
        prob = problem(pressure_budget_kpa=10.0, rho_candidates=(0.5,))
        result = design_bands(prob, ref_material, fast_settings, n_samples=2, jobs=4)
        unbanded = design_bands(problem(rho_candidates=(0.0,)), ref_material,
                                fast_settings, n_samples=2, jobs=1)
        assert result.predicted_k < unbanded.predicted_k

    def test_greedy_fallback_beyond_enumeration_limit(self, ref_material,
                                                      fast_settings, monkeypatch):
        monkeypatch.setattr(designer_mod, "EXHAUSTIVE_LIMIT", 3)
        prob = problem(pressure_budget_kpa=10.0, rho_candidates=(0.3, 0.5))
        result = design_bands(prob, ref_material, fast_settings, n_samples=2, jobs=1)
        assert result.search_mode == "greedy"
        assert len(result.bands) == 2
        assert all(b.reduction_ratio == 0.5 for b in result.bands)
