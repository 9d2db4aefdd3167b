"""Randomized Bregman block coordinate descent, accelerated variants and numerical checks."""

from .geometry import (
    BURG,
    EUCLIDEAN,
    SHANNON,
    BlockPartition,
    BregmanError,
    DomainError,
    ReferenceFunction,
    RegKind,
    Regularizer,
    UnboundedSubproblemError,
    WeightedReference,
    bregman_distance,
    bregman_prox,
    bregman_prox_numeric,
    weighted_distance,
)
from .problems import (
    Family,
    ProblemInstance,
    ResidualCache,
    full_gradient,
    load_instance,
    make_instance,
    objective,
    partial_gradient,
    save_instance,
    smoothness_constants,
    synth_instance,
)
from .solvers import (
    BetaSchedule,
    Solver,
    SolverConfig,
    SolverTrace,
    beta_closed_form,
    beta_equality,
    run_abpg,
    run_arbcd,
    run_arbcd_efficient,
    run_bpg,
    run_rbcd,
    run_solver,
    stationarity,
    t_map,
)

__version__ = "0.1.0"
