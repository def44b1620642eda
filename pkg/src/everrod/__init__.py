"""everrod: Cosserat-rod statics for pressurized eversion-robot tubes.

Simulates clamped banded tubes under point loads, replays the physical
stiffness-characterization protocols, identifies material parameters
from measured curves, and searches band layouts that minimize bending
stiffness under a minimum-eversion-pressure budget.
"""

__version__ = "0.1.0"

from .domain import (
    DEFAULT_ALPHA_TABLE,
    BandSpec,
    CrossSection,
    MaterialModel,
    RodSpec,
    StiffnessMatrices,
    cross_section_at,
    effective_modulus,
    radius_profile,
    reference_material,
    reference_rod,
    stiffness_matrices_at,
)
from .errors import (
    CalibrationMissingError,
    DataError,
    DisplacementUnreachableError,
    EverrodError,
    InfeasibleDesignError,
    IntegrationDivergedError,
    NoEquilibriumError,
    ScenarioError,
    SolverError,
    ValidationError,
)
from .solver import (
    LoadCase,
    RodState,
    SolverSettings,
    hat,
    integrate_ivp,
    solve_imposed_displacement,
    solve_point_load,
)
from .lab import (
    ExperimentBattery,
    ForceDisplacementCurve,
    StiffnessResult,
    ordering_violations,
    run_characterization_battery,
    stiffness_index,
    sweep_force_displacement,
)
from .calibration import (
    EversionPressureModel,
    FitResult,
    MeasuredCurve,
    fit_alpha,
    fit_effective_modulus,
    fit_eversion_pressure,
    predict_eversion_pressure,
)
from .designer import (
    DesignProblem,
    DesignResult,
    FabricationSheet,
    design_bands,
    fabrication_sheet,
)
from .svg import PlotStyle, plot_curve

__all__ = [name for name in dir() if not name.startswith("_")]
