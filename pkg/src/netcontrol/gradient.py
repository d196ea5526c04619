"""Exact gradients of the intervention losses with respect to unbounded parameters.

The intervention is ``o_j = o_max_j * sigmoid(p_u_j)`` on the source nodes.  The
control vector depends on ``o`` both directly and through the adjusted matrix
``B(o)``; its sensitivity is obtained with one adjoint solve against the LU
factors already computed for the forward propagation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.special import expit

from .backbone import ControlVector, adjust_ownership, factorize, propagate
from .objective import (
    InterventionProblem,
    LossBreakdown,
    augmented_breakdown,
    total_loss,
)


@dataclass(frozen=True)
class AgentParams:
    p_u: np.ndarray

    @property
    def p(self) -> np.ndarray:
        return expit(self.p_u)

    def intervention(self, problem: InterventionProblem) -> np.ndarray:
        return problem.expand(reparametrize(self.p_u, problem.o_max_sources))


@dataclass
class GradientReport:
    loss: float
    grad: np.ndarray
    breakdown: LossBreakdown
    o: np.ndarray
    control: ControlVector
    fd_grad: np.ndarray | None = None
    max_abs_dev: float | None = None
    max_rel_dev: float | None = None
    passed: bool | None = None


def reparametrize(p_u: np.ndarray, o_max: np.ndarray) -> np.ndarray:
    return np.asarray(o_max, dtype=float) * expit(np.asarray(p_u, dtype=float))


def evaluate_with_gradient(
    problem: InterventionProblem,
    p_u: np.ndarray,
    rho: float | None = None,
    alpha: float | None = None,
) -> GradientReport:
    """Loss and its gradient w.r.t. ``p_u``.

    Uses the weighted loss in lam mode and the augmented Lagrangian with
    ``(rho, alpha)`` in budget mode.
    """
    net, cfg = problem.network, problem.config
    src = problem.sources.array
    p_u = np.asarray(p_u, dtype=float)
    sig = expit(p_u)
    o_src = problem.o_max_sources * sig
    o = problem.expand(o_src)

    B = adjust_ownership(net, o, problem.o_max)
    factors = factorize(net, B)
    cv = propagate(net, B, o, factors)
    c = cv.total

    # Adjoint: (I - B) y = dL/dc, with dL/dc = -1 on targets.
    g_c = np.zeros(net.n)
    g_c[problem.targets.array] = -1.0
    y = sla.lu_solve(factors, g_c, trans=1, check_finite=False)
    shrink = 1.0 - net.adjacency_csc.T @ c
    g_o = (y * shrink)[src]

    if cfg.budget_mode:
        if rho is None or alpha is None:
            raise ValueError("budget mode needs rho and alpha")
        bd = augmented_breakdown(c, o, problem, rho, alpha)
        h = bd.violation
        raw = bd.cost_loss - cfg.budget
        active = cfg.sense == "eq" or raw > 0
        if active:
            g_o = g_o + (rho * h + alpha * np.sign(h)) * net.values[src]
    else:
        bd = total_loss(c, o, problem)
        if cfg.lam:
            if cfg.cost == "value":
                g_o = g_o + cfg.lam * net.values[src]
            elif cfg.cost == "l1":
                g_o = g_o + cfg.lam
            else:
                norm = np.linalg.norm(o_src)
                if norm > 0:
                    g_o = g_o + cfg.lam * o_src / norm

    grad = g_o * problem.o_max_sources * sig * (1.0 - sig)
    return GradientReport(bd.total, grad, bd, o, cv)


def central_differences(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        g[k] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def finite_difference_gradient(
    problem: InterventionProblem,
    p_u: np.ndarray,
    step: float = 1e-5,
    rho: float | None = None,
    alpha: float | None = None,
) -> np.ndarray:
    return central_differences(
        lambda x: evaluate_with_gradient(problem, x, rho, alpha).loss, p_u, step
    )


def compare_gradients(
    analytic: np.ndarray, fd: np.ndarray, rtol: float = 1e-4, atol: float = 1e-8
) -> tuple[float, float, bool]:
    """Max absolute and relative deviation, and whether every component is within tolerance.

    A component passes when its absolute deviation is below ``atol`` or its
    relative deviation is below ``rtol``.
    """
    diff = np.abs(analytic - fd)
    scale = np.maximum(np.abs(analytic), np.abs(fd))
    rel = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), 0.0)
    ok = (diff <= atol) | (rel <= rtol)
    max_rel = float(np.max(np.where(diff > atol, rel, 0.0), initial=0.0))
    return float(diff.max(initial=0.0)), max_rel, bool(ok.all())


def grad_check(
    problem: InterventionProblem,
    p_u: np.ndarray,
    step: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-8,
    rho: float | None = None,
    alpha: float | None = None,
    perturb: float = 0.0,
) -> GradientReport:
    """Analytic gradient next to central differences; ``perturb`` corrupts the analytic side."""
    rep = evaluate_with_gradient(problem, p_u, rho, alpha)
    if perturb:
        rep.grad = rep.grad + perturb * np.maximum(np.abs(rep.grad), 1.0)
    rep.fd_grad = finite_difference_gradient(problem, p_u, step, rho, alpha)
    rep.max_abs_dev, rep.max_rel_dev, rep.passed = compare_gradients(rep.grad, rep.fd_grad, rtol, atol)
    return rep
