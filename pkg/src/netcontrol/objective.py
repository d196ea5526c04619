"""Loss terms for the intervention problem.

Losses are evaluated on full-length vectors: ``o`` and ``c`` have one entry per
node, with ``o`` zero outside the source set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

from .network import NodeSelection, OwnershipNetwork, compute_o_max

CostVariant = Literal["value", "l1", "l2"]
Sense = Literal["eq", "ineq"]


@dataclass(frozen=True)
class LossConfig:
    """Either a cost weight ``lam`` or a budget (in the unit of node values)."""

    lam: float | None = None
    budget: float | None = None
    cost: CostVariant = "value"
    sense: Sense = "eq"

    def __post_init__(self):
        if (self.lam is None) == (self.budget is None):
            raise ValueError("set exactly one of lam or budget")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.cost not in ("value", "l1", "l2"):
            raise ValueError(f"unknown cost variant {self.cost!r}")
        if self.sense not in ("eq", "ineq"):
            raise ValueError(f"unknown constraint sense {self.sense!r}")

    @property
    def budget_mode(self) -> bool:
        return self.budget is not None


@dataclass(frozen=True, eq=False)
class InterventionProblem:
    network: OwnershipNetwork
    sources: NodeSelection
    targets: NodeSelection
    config: LossConfig = field(default_factory=lambda: LossConfig(lam=0.0))

    def __post_init__(self):
        if len(self.sources) == 0:
            raise ValueError("source set is empty")
        if len(self.targets) == 0:
            raise ValueError("target set is empty")

    @cached_property
    def o_max(self) -> np.ndarray:
        return compute_o_max(self.network)

    @cached_property
    def o_max_sources(self) -> np.ndarray:
        return self.o_max[self.sources.array]

    def with_config(self, config: LossConfig) -> "InterventionProblem":
        return InterventionProblem(self.network, self.sources, self.targets, config)

    def expand(self, o_sources: np.ndarray) -> np.ndarray:
        """Scatter a per-source vector into a full-length intervention."""
        o = np.zeros(self.network.n)
        o[self.sources.array] = o_sources
        return o


@dataclass(frozen=True)
class LossBreakdown:
    control_loss: float
    cost_loss: float
    total: float
    violation: float = 0.0
    rho: float | None = None
    alpha: float | None = None


def control_loss(c: np.ndarray, targets: NodeSelection) -> float:
    """Missing control summed over the targets."""
    if len(targets) == 0:
        raise ValueError("empty target set")
    return float(np.sum(1.0 - c[targets.array]))


def cost_lp(o: np.ndarray, p: int) -> float:
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    return float(np.linalg.norm(o, ord=p))


def cost_value(o: np.ndarray, net: OwnershipNetwork, sources: NodeSelection) -> float:
    idx = sources.array
    return float(o[idx] @ net.values[idx])


def cost_loss(o: np.ndarray, problem: InterventionProblem, variant: CostVariant | None = None) -> float:
    variant = variant or problem.config.cost
    if variant == "value":
        return cost_value(o, problem.network, problem.sources)
    return cost_lp(o[problem.sources.array], 1 if variant == "l1" else 2)


def total_loss(c: np.ndarray, o: np.ndarray, problem: InterventionProblem) -> LossBreakdown:
    cfg = problem.config
    if cfg.budget_mode:
        raise ValueError("total_loss needs a lam-mode configuration")
    ctrl = control_loss(c, problem.targets)
    cost = cost_loss(o, problem)
    return LossBreakdown(ctrl, cost, ctrl + cfg.lam * cost)


def budget_constraint(
    o: np.ndarray, net: OwnershipNetwork, sources: NodeSelection, budget: float, sense: Sense = "eq"
) -> float:
    """Budget residual: signed overspend (eq) or overspend clipped at zero (ineq)."""
    h = cost_value(o, net, sources) - budget
    return h if sense == "eq" else max(0.0, h)


def augmented_loss(control: float, h: float, rho: float, alpha: float) -> float:
    if rho <= 0 or alpha < 0:
        raise ValueError("need rho > 0 and alpha >= 0")
    return control + 0.5 * rho * h * h + alpha * abs(h)


def augmented_breakdown(
    c: np.ndarray, o: np.ndarray, problem: InterventionProblem, rho: float, alpha: float
) -> LossBreakdown:
    cfg = problem.config
    if not cfg.budget_mode:
        raise ValueError("augmented loss needs a budget-mode configuration")
    ctrl = control_loss(c, problem.targets)
    cost = cost_value(o, problem.network, problem.sources)
    h = budget_constraint(o, problem.network, problem.sources, cfg.budget, cfg.sense)
    return LossBreakdown(ctrl, cost, augmented_loss(ctrl, h, rho, alpha), h, rho, alpha)


def control_set_size(c: np.ndarray, c_cut: float = 0.5) -> int:
    if not 0.0 < c_cut <= 1.0:
        raise ValueError("c_cut must lie in (0, 1]")
    return int(np.count_nonzero(np.asarray(c) >= c_cut))


def control_shares(c: np.ndarray, problem: InterventionProblem) -> dict[str, float | None]:
    """Achieved control over the targets in percent, against full equity and against acquirable shares."""
    idx = problem.targets.array
    held = float(np.sum(c[idx]))
    avail = float(np.sum(problem.o_max[idx]))
    return {
        "control_pct": 100.0 * held / idx.size,
        # None when no target share can be bought at all
        "control_pct_available": 100.0 * held / avail if avail > 0 else None,
    }
