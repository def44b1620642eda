"""Exception hierarchy shared across the toolkit.

Every error carries an ``exit_code`` so the command-line layer can map
failures onto its documented process exit codes without inspecting types:
2 for validation/parse problems, 3 for solver non-convergence, 4 for an
infeasible design request.
"""

from __future__ import annotations


class EverrodError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ValidationError(EverrodError):
    """Invalid physical quantity, argument, or constructed object."""

    exit_code = 2


class DataError(EverrodError):
    """Degenerate or malformed measured data."""

    exit_code = 2


class ScenarioError(EverrodError):
    """Malformed scenario/problem document (JSON syntax, schema, units)."""

    exit_code = 2


class CalibrationMissingError(EverrodError):
    """A material lookup fell outside the calibrated table's hull."""

    exit_code = 2


class SolverError(EverrodError):
    """Base for numerical-solution failures."""

    exit_code = 3


class IntegrationDivergedError(SolverError):
    """State became non-finite during forward integration."""

    def __init__(self, message: str, station_index: int | None = None):
        super().__init__(message)
        self.station_index = station_index


class NoEquilibriumError(SolverError):
    """Shooting iteration failed to meet the moment-residual tolerance."""

    def __init__(self, message: str, best_residual: float | None = None):
        super().__init__(message)
        self.best_residual = best_residual


class DisplacementUnreachableError(SolverError):
    """No force up to the configured cap reaches the target displacement."""


class InfeasibleDesignError(EverrodError):
    """No band layout satisfies the design constraints."""

    exit_code = 4
