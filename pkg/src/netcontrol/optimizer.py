"""Adam descent on the unbounded intervention parameters.

``optimize`` minimises the lam-weighted loss; ``optimize_budget`` wraps the same
inner loop in an augmented-Lagrangian outer loop for a hard budget.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.special import logit

from .backbone import ControlVector, SingularOwnership
from .gradient import AgentParams, evaluate_with_gradient
from .objective import InterventionProblem, LossBreakdown

log = logging.getLogger(__name__)

LEARNING_RATES = (0.1, 1.0, 0.001)


class Diverged(RuntimeError):
    """The loss or its gradient became non-finite."""


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_steps: int = 3000
    window: int = 5
    tol: float = 1e-8
    init: Literal["gaussian", "budget_estimate"] = "gaussian"
    init_mean: float = -7.0
    init_std: float = 1e-4
    seed: int = 0
    # Retry with the other rates in LEARNING_RATES when a run diverges or stalls at the cap.
    auto_retry: bool = False
    retry_rel_change: float = 1e-4
    budget_hint: float | None = None

    def __post_init__(self):
        if self.lr <= 0 or self.tol <= 0 or self.eps <= 0:
            raise ValueError("lr, tol and eps must be positive")
        if self.max_steps < 1 or self.window < 1:
            raise ValueError("max_steps and window must be >= 1")
        if self.init not in ("gaussian", "budget_estimate"):
            raise ValueError(f"unknown init scheme {self.init!r}")


@dataclass(frozen=True)
class ALConfig:
    rho: float = 1.0
    alpha: float = 0.0
    growth: float = 10.0
    shrink: float = 0.25
    tol: float | None = None
    rel_tol: float = 1e-3
    abs_tol: float = 1e-6
    max_outer: int = 20
    max_rho: float = 1e16

    def __post_init__(self):
        if self.growth <= 1:
            raise ValueError("growth factor must exceed 1")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink threshold must lie in (0, 1)")
        if self.rho <= 0 or self.alpha < 0:
            raise ValueError("need rho > 0 and alpha >= 0")

    def tolerance(self, budget: float) -> float:
        if self.tol is not None:
            return self.tol
        return max(self.rel_tol * budget, self.abs_tol)


@dataclass
class OptimizationResult:
    o: np.ndarray
    p_u: np.ndarray
    breakdown: LossBreakdown
    control: ControlVector
    trajectory: list[LossBreakdown]
    converged: bool
    reason: str
    steps: int
    lr: float
    seed: int
    wall_time: float = 0.0
    outer: list[dict] = field(default_factory=list)

    @property
    def loss(self) -> float:
        return self.breakdown.total

    @property
    def violation(self) -> float:
        return self.breakdown.violation


@dataclass
class SweepPoint:
    lam: float
    result: OptimizationResult | None
    error: str | None = None


class Adam:
    """Adam with bias correction, same update rule as the usual framework default."""

    def __init__(self, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def init_params(
    scheme: str, problem: InterventionProblem, seed: int = 0, budget: float | None = None,
    mean: float = -7.0, std: float = 1e-4,
) -> AgentParams:
    """Starting point: tiny gaussian holdings, or an even split of the budget over the sources."""
    m = len(problem.sources)
    if scheme == "gaussian":
        rng = np.random.default_rng(seed)
        return AgentParams(rng.normal(mean, std, size=m))
    if scheme == "budget_estimate":
        if budget is None:
            if not problem.config.budget_mode:
                raise ValueError("budget_estimate init needs a budget")
            budget = problem.config.budget
        v = problem.network.values[problem.sources.array]
        o_max = problem.o_max_sources
        with np.errstate(divide="ignore"):
            o = np.where(v > 0, np.minimum(o_max, budget / (m * v)), o_max)
        frac = np.divide(o, o_max, out=np.zeros(m), where=o_max > 0)
        return AgentParams(logit(np.clip(frac, 1e-6, 1 - 1e-6)))
    raise ValueError(f"unknown init scheme {scheme!r}")


def _initial(problem: InterventionProblem, config: OptimizerConfig) -> np.ndarray:
    return init_params(
        config.init, problem, config.seed, config.budget_hint, config.init_mean, config.init_std
    ).p_u


def descend(
    problem: InterventionProblem,
    p_u: np.ndarray,
    config: OptimizerConfig,
    lr: float | None = None,
    rho: float | None = None,
    alpha: float | None = None,
) -> tuple[np.ndarray, list[LossBreakdown], str, int]:
    """One Adam run from ``p_u``; stops once the loss moved less than ``tol`` for ``window`` steps."""
    adam = Adam(lr or config.lr, config.beta1, config.beta2, config.eps)
    p = np.array(p_u, dtype=float)
    traj: list[LossBreakdown] = []
    prev = None
    quiet = 0
    steps = 0
    while True:
        rep = evaluate_with_gradient(problem, p, rho, alpha)
        if not (math.isfinite(rep.loss) and np.all(np.isfinite(rep.grad))):
            raise Diverged(f"non-finite loss {rep.loss} after {steps} steps (lr={adam.lr})")
        traj.append(rep.breakdown)
        if prev is not None:
            quiet = quiet + 1 if abs(rep.loss - prev) < config.tol else 0
        if quiet >= config.window:
            return p, traj, "converged", steps
        if steps >= config.max_steps:
            return p, traj, "max_steps", steps
        prev = rep.loss
        p = adam.step(p, rep.grad)
        steps += 1


def _stalled(traj: list[LossBreakdown], config: OptimizerConfig) -> bool:
    if len(traj) < 101:
        return False
    a, b = traj[-101].total, traj[-1].total
    return abs(a - b) / max(abs(b), 1e-12) > config.retry_rel_change


def _finish(problem, p, traj, reason, steps, lr, config, t0, rho=None, alpha=None) -> OptimizationResult:
    rep = evaluate_with_gradient(problem, p, rho, alpha)
    return OptimizationResult(
        o=rep.o,
        p_u=p,
        breakdown=rep.breakdown,
        control=rep.control,
        trajectory=traj,
        converged=reason == "converged",
        reason=reason,
        steps=steps,
        lr=lr,
        seed=config.seed,
        wall_time=time.perf_counter() - t0,
    )


def optimize(
    problem: InterventionProblem, config: OptimizerConfig = OptimizerConfig(),
    p_u0: np.ndarray | None = None,
) -> OptimizationResult:
    """Minimise control loss + lam * cost over the source holdings."""
    if problem.config.budget_mode:
        raise ValueError("optimize needs a lam-mode problem; use optimize_budget")
    t0 = time.perf_counter()
    start = _initial(problem, config) if p_u0 is None else np.asarray(p_u0, dtype=float)
    rates = [config.lr]
    if config.auto_retry:
        rates += [r for r in LEARNING_RATES if r != config.lr]
    best: OptimizationResult | None = None
    error: Diverged | None = None
    for lr in rates:
        try:
            p, traj, reason, steps = descend(problem, start, config, lr)
        except Diverged as e:
            log.warning("%s", e)
            error = e
            continue
        res = _finish(problem, p, traj, reason, steps, lr, config, t0)
        if best is None or res.loss < best.loss:
            best = res
        if reason == "converged" or not _stalled(traj, config):
            break
        log.info("lr=%g stalled at the step cap, retrying", lr)
    if best is None:
        raise error
    best.wall_time = time.perf_counter() - t0
    return best


def lambda_sweep(
    problem: InterventionProblem,
    lams: Sequence[float],
    config: OptimizerConfig = OptimizerConfig(),
    warm_start: bool = False,
    jobs: int = 1,
) -> list[SweepPoint]:
    """Independent optimisations over an ascending lam grid.

    Every grid point uses ``config.seed``, so a point's result does not depend
    on its position in the grid.  Failures are recorded per point.
    """
    lams = [float(x) for x in lams]
    if not lams:
        raise ValueError("empty lambda grid")
    if any(b < a for a, b in zip(lams, lams[1:])):
        raise ValueError("lambda grid must be sorted ascending")
    if lams[0] < 0:
        raise ValueError("lambda must be >= 0")
    base = problem.config

    def run(lam: float, p0=None) -> SweepPoint:
        sub = problem.with_config(replace(base, lam=lam, budget=None))
        try:
            return SweepPoint(lam, optimize(sub, config, p0))
        except (Diverged, SingularOwnership) as e:
            return SweepPoint(lam, None, f"{type(e).__name__}: {e}")

    if warm_start:
        out, p0 = [], None
        for lam in lams:
            pt = run(lam, p0)
            out.append(pt)
            if pt.result is not None:
                p0 = pt.result.p_u
        return out
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, lams))
    return [run(lam) for lam in lams]


def optimize_budget(
    problem: InterventionProblem,
    al: ALConfig = ALConfig(),
    config: OptimizerConfig = OptimizerConfig(),
) -> OptimizationResult:
    """Maximise control subject to the budget via an augmented Lagrangian.

    After each inner run the multiplier grows by ``rho * |H|``; ``rho`` itself is
    multiplied by ``growth`` whenever ``|H|`` failed to shrink below ``shrink``
    times its previous value.
    """
    cfg = problem.config
    if not cfg.budget_mode:
        raise ValueError("optimize_budget needs a budget-mode problem")
    t0 = time.perf_counter()
    tol = al.tolerance(cfg.budget)
    if config.init == "budget_estimate" and config.budget_hint is None:
        config = replace(config, budget_hint=cfg.budget)
    p = _initial(problem, config)
    rho, alpha = al.rho, al.alpha
    last_h = math.inf
    traj: list[LossBreakdown] = []
    outer: list[dict] = []
    steps = 0
    converged = False
    reason = "max_outer"
    for it in range(al.max_outer):
        p, inner, inner_reason, n = descend(problem, p, config, None, rho, alpha)
        traj.extend(inner)
        steps += n
        h = abs(inner[-1].violation)
        outer.append(
            {"iteration": it, "rho": rho, "alpha": alpha, "violation": inner[-1].violation,
             "control_loss": inner[-1].control_loss, "cost": inner[-1].cost_loss,
             "steps": n, "inner": inner_reason}
        )
        log.debug("outer %d: rho=%g alpha=%g |H|=%g", it, rho, alpha, h)
        if h <= tol:
            converged, reason = True, "converged"
            break
        alpha += rho * h
        if h > al.shrink * last_h:
            rho *= al.growth
        last_h = h
        if rho > al.max_rho:
            reason = "max_rho"
            break
    res = _finish(problem, p, traj, reason, steps, config.lr, config, t0, rho, alpha)
    res.converged = converged
    res.outer = outer
    return res


def best_of(
    run: Callable[[OptimizerConfig], OptimizationResult],
    config: OptimizerConfig,
    restarts: int = 3,
    key: Callable[[OptimizationResult], tuple] | None = None,
) -> OptimizationResult:
    """Best of several seeded runs (seeds ``seed, seed+1, ...``), lowest loss by default."""
    key = key or (lambda r: (r.loss,))
    results = [run(replace(config, seed=config.seed + k)) for k in range(restarts)]
    return min(results, key=key)


def budget_key(res: OptimizationResult) -> tuple:
    """Prefer feasible budget runs, then the most control."""
    return (not res.converged, res.breakdown.control_loss)
