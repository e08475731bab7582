"""Simulator for a four-particle Aharonov-Casher Bell test."""
from .engine import (
    ChshSettings,
    CorrelationRecord,
    ExperimentLayout,
    JointDistribution,
    PhaseQuadruple,
    ScanResult,
    assemble_total_state,
    chsh_value,
    closed_form_correlation,
    compute_phases,
    correlation,
    joint_probabilities,
    lhv_reference_bound,
    scan_chsh_over_locations,
    scan_chsh_over_phases,
)
from .geometry import (
    LineCharge,
    MagneticMoment,
    Polyline,
    ac_phase_analytic,
    ac_phase_quadrature,
    validate_path,
    winding_number,
)
from .spin import CoupledLabel, PairGrouping, StateVector

__version__ = "0.1.0"

__all__ = [
    "ChshSettings",
    "CorrelationRecord",
    "CoupledLabel",
    "ExperimentLayout",
    "JointDistribution",
    "LineCharge",
    "MagneticMoment",
    "PairGrouping",
    "PhaseQuadruple",
    "Polyline",
    "ScanResult",
    "StateVector",
    "ac_phase_analytic",
    "ac_phase_quadrature",
    "assemble_total_state",
    "chsh_value",
    "closed_form_correlation",
    "compute_phases",
    "correlation",
    "joint_probabilities",
    "lhv_reference_bound",
    "scan_chsh_over_locations",
    "scan_chsh_over_phases",
    "validate_path",
    "winding_number",
]
