"""Dynamical flow networks with spill-back: simulation, resilience bounds and perturbation sweeps."""

from .dynamics import (
    Classification,
    NetworkState,
    SaturationEvent,
    SimOptions,
    Trajectory,
    classify_transferring,
    make_state,
    rhs,
    simulate,
    solve_equilibrium,
)
from .errors import *  # noqa: F401,F403
from .network import (
    ClippedFlow,
    CutReport,
    FlowFunction,
    LinkDef,
    Topology,
    cut_capacity,
    enumerate_cuts,
    is_tree_like,
    min_cut_capacity,
    validate_topology,
)
from .perturbation import (
    Perturbation,
    SweepResult,
    SweepSpec,
    empirical_margin_sweep,
    make_clipped_perturbation,
    make_scaling_perturbation,
    perturbation_magnitude,
    simulate_perturbed,
)
from .resilience import (
    EquilibriumFlow,
    ResilienceReport,
    attack_profile,
    bounds_report,
    compute_d,
    minimize_cv,
    residual_capacity,
)
from .routing import AxiomCheckReport, RoutingPolicy, calibrate_weights, check_axioms, restricted_policy
from .specfile import NetworkSpec, load_spec, parse_spec

__version__ = "0.1.0"
