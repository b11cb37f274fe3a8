"""Spin Hamiltonians with fourth-order anisotropy.

Semiclassical landscapes and their catastrophe sets, phonon-driven
master-equation dynamics, fidelity probes and Bloch-sphere maps.
"""

from .catastrophe import (
    PhaseDescriptor,
    PhaseMap,
    SeparatrixCurve,
    TriplePoint,
    bifurcation_branch,
    classify_point,
    locate_triple_point,
    maxwell_branches,
    maxwell_oracle,
)
from .dynamics import (
    HysteresisLoop,
    PhononEnvironment,
    PopulationState,
    RateMatrix,
    SweepSchedule,
    build_rate_matrix,
    evolve,
    hysteresis_loop,
    magnetization,
    relaxation_rate,
    relaxation_time,
    transition_rate,
)
from .errors import (
    BracketError,
    ConfigError,
    ContractViolationError,
    DegenerateKernelError,
    DegenerateLevelError,
    IntegrationError,
    InvalidEnvironmentError,
    InvalidSpinError,
    NotFoundError,
    PrefactorSingularityError,
    ReductionNotApplicableError,
    SpincatError,
)
from .probes import BlochGrid, FidelitySample, bloch_amplitude, bloch_grid, fidelity, fidelity_susceptibility
from .scenario import Scenario, load_preset, load_scenario
from .semiclassic import (
    CoherentVector,
    CriticalPoint,
    ReducedParams,
    coherent_vector,
    find_critical_points,
    global_minimum,
    potential_full,
    potential_reduced,
    reduce_params,
)
from .spinops import EigenSystem, SpinModel, StateLabels, assign_labels, build_hamiltonian, diagonalize, eigensystem
from .trajectory import CrossingEvent, FieldTrajectory, field_at, minimum_gap, scan_trajectory

__version__ = "0.1.0"

__all__ = [
    "BlochGrid",
    "BracketError",
    "CoherentVector",
    "ConfigError",
    "ContractViolationError",
    "CriticalPoint",
    "CrossingEvent",
    "DegenerateKernelError",
    "DegenerateLevelError",
    "EigenSystem",
    "FidelitySample",
    "FieldTrajectory",
    "HysteresisLoop",
    "IntegrationError",
    "InvalidEnvironmentError",
    "InvalidSpinError",
    "NotFoundError",
    "PhaseDescriptor",
    "PhaseMap",
    "PhononEnvironment",
    "PopulationState",
    "PrefactorSingularityError",
    "RateMatrix",
    "ReducedParams",
    "ReductionNotApplicableError",
    "Scenario",
    "SeparatrixCurve",
    "SpinModel",
    "SpincatError",
    "StateLabels",
    "SweepSchedule",
    "TriplePoint",
    "assign_labels",
    "bifurcation_branch",
    "bloch_amplitude",
    "bloch_grid",
    "build_hamiltonian",
    "build_rate_matrix",
    "classify_point",
    "coherent_vector",
    "diagonalize",
    "eigensystem",
    "evolve",
    "fidelity",
    "fidelity_susceptibility",
    "field_at",
    "find_critical_points",
    "global_minimum",
    "hysteresis_loop",
    "load_preset",
    "load_scenario",
    "locate_triple_point",
    "magnetization",
    "maxwell_branches",
    "maxwell_oracle",
    "minimum_gap",
    "potential_full",
    "potential_reduced",
    "reduce_params",
    "relaxation_rate",
    "relaxation_time",
    "scan_trajectory",
    "transition_rate",
]
