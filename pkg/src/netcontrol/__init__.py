"""Optimal acquisition of control in weighted ownership networks."""

from .backbone import ControlVector, SingularOwnership, adjust_ownership, pairwise_control, propagate
from .gradient import AgentParams, evaluate_with_gradient, finite_difference_gradient, grad_check
from .network import (
    NetworkError,
    NodeSelection,
    OwnershipNetwork,
    compute_o_max,
    in_component,
    largest_connected_component,
    load_network,
    reachable_from_sources,
    save_network,
    select_nodes,
)
from .objective import InterventionProblem, LossBreakdown, LossConfig
from .optimizer import (
    ALConfig,
    Diverged,
    OptimizationResult,
    OptimizerConfig,
    lambda_sweep,
    optimize,
    optimize_budget,
)
from .synthgen import StarSpec, generate_extended_star, generate_random_dag, generate_random_network

__version__ = "0.1.0"
