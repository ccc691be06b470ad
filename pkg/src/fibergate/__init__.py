"""Conditional-phase gate between fiber-linked cavity atoms.

Closed-form effective model plus exact truncated-space dynamics for a
two-qubit phase gate mediated by virtual photons in a cavity-fiber-cavity
chain. The package exposes four layers:

``params``
    operating point, derived constants, error budget, validity checks.
``hilbert`` / ``hamiltonian``
    truncated product space and the exact, rotated and effective
    generators on it.
``dynamics``
    pure-state and density-matrix integrators with norm accounting.
``gate``
    the gate protocol itself: phase extraction, fidelity, leakage and
    asymmetry diagnostics.
"""

from fibergate.dynamics import (
    CollapseSet,
    IntegratorAbort,
    IntegratorConfig,
    LeakageError,
    Trajectory,
    collapse_modes,
    collapse_standard,
    evolve_lindblad,
    evolve_pure,
    evolve_pure_many,
    phase_of,
)
from fibergate.gate import (
    AsymmetryScan,
    GateReport,
    LeakageCheck,
    asymmetry_scan,
    decoherence_probe,
    gate_fidelity,
    leakage_check,
    run_gate,
)
from fibergate.hamiltonian import (
    HarmonicTerm,
    TimeDependentOperator,
    h_atom_cavity,
    h_cavity_fiber,
    h_effective,
    h_free_modes,
    h_full,
    h_rotated,
    h_second_order,
    predicted_phases,
)
from fibergate.hilbert import (
    HilbertSpace,
    QOperator,
    QState,
    atomic_projector,
    basis_state,
    mode_annihilation,
    normal_mode,
)
from fibergate.params import (
    DegenerateDetuningError,
    DerivedConstants,
    ModelParams,
    ParameterError,
    ValidityReport,
    conditional_phase_rate,
    derive_constants,
    gate_time_for_phase,
    infidelity_estimate,
    max_fiber_length,
    reference_params,
    validate,
)
from fibergate.verify import CheckResult, VerifySummary, run_all

__all__ = [
    "AsymmetryScan",
    "CheckResult",
    "CollapseSet",
    "DegenerateDetuningError",
    "DerivedConstants",
    "GateReport",
    "HarmonicTerm",
    "HilbertSpace",
    "IntegratorAbort",
    "IntegratorConfig",
    "LeakageCheck",
    "LeakageError",
    "ModelParams",
    "ParameterError",
    "QOperator",
    "QState",
    "TimeDependentOperator",
    "Trajectory",
    "ValidityReport",
    "VerifySummary",
    "asymmetry_scan",
    "atomic_projector",
    "basis_state",
    "collapse_modes",
    "collapse_standard",
    "conditional_phase_rate",
    "decoherence_probe",
    "derive_constants",
    "evolve_lindblad",
    "evolve_pure",
    "evolve_pure_many",
    "gate_fidelity",
    "gate_time_for_phase",
    "h_atom_cavity",
    "h_cavity_fiber",
    "h_effective",
    "h_free_modes",
    "h_full",
    "h_rotated",
    "h_second_order",
    "infidelity_estimate",
    "leakage_check",
    "max_fiber_length",
    "mode_annihilation",
    "normal_mode",
    "phase_of",
    "predicted_phases",
    "reference_params",
    "run_all",
    "run_gate",
    "validate",
]

__version__ = "0.1.0"
