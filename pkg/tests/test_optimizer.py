import numpy as np
import pytest

import netcontrol.optimizer as opt_mod
from conftest import random_graph, sel
from netcontrol.backbone import SingularOwnership
from netcontrol.network import NodeSelection, OwnershipNetwork
from netcontrol.objective import InterventionProblem, LossConfig
from netcontrol.optimizer import (
    Adam,
    ALConfig,
    Diverged,
    OptimizerConfig,
    best_of,
    init_params,
    lambda_sweep,
    optimize,
    optimize_budget,
)
from oracles import grid_optimum


@pytest.fixture
def chain_problem(chain):
    return InterventionProblem(chain, sel(0), sel(1), LossConfig(lam=0.0))


@pytest.fixture
def star_problem(star):
    S = NodeSelection.all(star)
    return InterventionProblem(star, S, S, LossConfig(lam=0.0))


class TestAdam:
    def test_matches_torch(self):
        torch = pytest.importorskip("torch")
        x0 = np.array([1.5, -0.3, 4.0])
        target = np.array([0.2, 0.1, -1.0])
        w = torch.tensor(x0, dtype=torch.float64, requires_grad=True)
        ref = torch.optim.Adam([w], lr=0.1)
        ours, x = Adam(lr=0.1), x0.copy()
        for _ in range(25):
            ref.zero_grad()
            loss = ((w - torch.tensor(target)) ** 3).abs().sum()
            loss.backward()
            ref.step()
            g = 3 * (x - target) ** 2 * np.sign(x - target)
            x = ours.step(x, g)
        np.testing.assert_allclose(x, w.detach().numpy(), rtol=1e-12, atol=1e-12)

    def test_quadratic(self):
        adam, x = Adam(lr=0.05), np.array([3.0, -2.0])
        for _ in range(2000):
            x = adam.step(x, 2 * x)
        assert np.abs(x).max() < 1e-2


class TestInit:
    def test_gaussian(self, star_problem):
        a = init_params("gaussian", star_problem, seed=4).p_u
        b = init_params("gaussian", star_problem, seed=4).p_u
        np.testing.assert_array_equal(a, b)
        assert a.mean() == pytest.approx(-7.0, abs=1e-3)
        assert a.std() < 1e-3

    def test_budget_zero(self, star_problem):
        p = init_params("budget_estimate", star_problem, budget=0.0)
        np.testing.assert_allclose(p.p, 1e-6, rtol=1e-9)

    def test_budget_single_source(self, chain):
        prob = InterventionProblem(chain, sel(1), sel(1))
        o_max = prob.o_max_sources[0]
        p = init_params("budget_estimate", prob, budget=2.0 * o_max / 2)
        assert o_max * p.p[0] == pytest.approx(o_max / 2, rel=1e-9)

    def test_budget_needed(self, star_problem):
        with pytest.raises(ValueError):
            init_params("budget_estimate", star_problem)
        with pytest.raises(ValueError):
            init_params("uniform", star_problem)


class TestOptimize:
    def test_chain_saturates(self, chain_problem):
        res = optimize(chain_problem)
        assert res.o[0] >= 1 - 1e-3
        assert res.control.total[1] == pytest.approx(0.5, abs=1e-3)

    def test_huge_lambda_buys_nothing(self, star_problem):
        res = optimize(star_problem.with_config(LossConfig(lam=1e6)))
        assert res.breakdown.cost_loss <= 1e-3

    def test_window_rule(self, chain3):
        # Nothing reachable from the sink: the loss is flat from the start.
        prob = InterventionProblem(chain3, sel(2), sel(0, 1), LossConfig(lam=0.0))
        res = optimize(prob)
        assert res.converged and res.reason == "converged"
        assert res.steps == 5

    def test_step_cap(self, star_problem):
        res = optimize(star_problem, OptimizerConfig(max_steps=7))
        assert res.reason == "max_steps" and not res.converged
        assert res.steps == 7 and len(res.trajectory) == 8

    def test_deterministic(self, star_problem):
        a = optimize(star_problem.with_config(LossConfig(lam=0.5)), OptimizerConfig(seed=3))
        b = optimize(star_problem.with_config(LossConfig(lam=0.5)), OptimizerConfig(seed=3))
        assert [t.total for t in a.trajectory] == [t.total for t in b.trajectory]
        assert np.array_equal(a.o, b.o)

    def test_rejects_budget_mode(self, chain_problem):
        with pytest.raises(ValueError):
            optimize(chain_problem.with_config(LossConfig(budget=1.0)))

    def test_diverged(self, chain_problem, monkeypatch):
        real = opt_mod.evaluate_with_gradient

        def broken(*a, **k):
            rep = real(*a, **k)
            rep.loss = float("nan")
            return rep

        monkeypatch.setattr(opt_mod, "evaluate_with_gradient", broken)
        with pytest.raises(Diverged):
            optimize(chain_problem)
        with pytest.raises(Diverged):
            optimize(chain_problem, OptimizerConfig(auto_retry=True))

    def test_auto_retry_tries_other_rates(self, star_problem, monkeypatch):
        seen = []
        real = opt_mod.descend

        def spy(problem, p_u, config, lr=None, *a):
            seen.append(lr)
            return real(problem, p_u, config, lr, *a)

        monkeypatch.setattr(opt_mod, "descend", spy)
        res = optimize(star_problem.with_config(LossConfig(lam=0.3)),
                       OptimizerConfig(max_steps=150, auto_retry=True))
        # retries stop at the first rate that converges or stops stalling
        assert len(seen) >= 2 and seen == [0.1, 1.0, 0.001][: len(seen)]
        assert res.lr in seen

    def test_loss_mostly_decreasing(self, star_problem):
        res = optimize(star_problem.with_config(LossConfig(lam=0.5)))
        L = np.array([t.total for t in res.trajectory])
        windows = [L[k + 50] <= L[k] + 1e-12 for k in range(len(L) - 50)]
        assert np.mean(windows) >= 0.95

    def test_singular(self):
        net = OwnershipNetwork.from_edges(["a", "b", "x"], [1, 1, 1], [("a", "b", 1.0), ("b", "a", 1.0)])
        with pytest.raises(SingularOwnership):
            optimize(InterventionProblem(net, sel(2), sel(0), LossConfig(lam=0.0)))


class TestSweep:
    def test_zero_grid_equals_optimize(self, star_problem):
        (pt,) = lambda_sweep(star_problem, [0.0])
        np.testing.assert_array_equal(pt.result.o, optimize(star_problem).o)

    def test_repeated_lambda_identical(self, star_problem):
        a, b = lambda_sweep(star_problem, [0.7, 0.7])
        np.testing.assert_array_equal(a.result.o, b.result.o)

    def test_ordering_and_threads(self, star_problem):
        grid = [0.25, 0.5, 1.0]
        seq = lambda_sweep(star_problem, grid)
        par = lambda_sweep(star_problem, grid, jobs=3)
        assert [p.lam for p in par] == grid
        for s, p in zip(seq, par):
            np.testing.assert_array_equal(s.result.o, p.result.o)

    def test_curve_direction(self, star_problem):
        lo, hi = lambda_sweep(star_problem, [0.5, 1.0])
        assert lo.result.breakdown.control_loss < hi.result.breakdown.control_loss
        assert lo.result.breakdown.cost_loss > hi.result.breakdown.cost_loss

    def test_warm_start(self, star_problem):
        pts = lambda_sweep(star_problem, [0.25, 2.0], warm_start=True)
        assert all(p.result is not None for p in pts)

    @pytest.mark.parametrize("grid", [[], [1.0, 0.5], [-1.0]])
    def test_bad_grid(self, star_problem, grid):
        with pytest.raises(ValueError):
            lambda_sweep(star_problem, grid)

    def test_failure_recorded(self):
        net = OwnershipNetwork.from_edges(["a", "b", "x"], [1, 1, 1], [("a", "b", 1.0), ("b", "a", 1.0)])
        pts = lambda_sweep(InterventionProblem(net, sel(2), sel(0)), [0.0, 1.0])
        assert all(p.result is None and "Singular" in p.error for p in pts)


class TestBudget:
    def test_chain_equality(self, chain_problem):
        res = optimize_budget(chain_problem.with_config(LossConfig(budget=2.0, sense="eq")))
        assert res.converged
        assert res.o[0] == pytest.approx(0.5, abs=1e-3)
        assert res.breakdown.cost_loss == pytest.approx(2.0, abs=2e-3)
        assert res.control.total[1] == pytest.approx(0.25, abs=1e-3)

    def test_zero_budget(self, star_problem):
        res = optimize_budget(star_problem.with_config(LossConfig(budget=0.0, sense="ineq")))
        assert res.converged
        assert res.breakdown.cost_loss <= 1e-6
        assert res.control.total.max() < 1e-6

    def test_slack_budget_matches_lambda_zero(self, star_problem):
        cap = float(star_problem.o_max @ star_problem.network.values)
        res = optimize_budget(star_problem.with_config(LossConfig(budget=cap, sense="ineq")))
        free = optimize(star_problem)
        assert res.converged and res.violation == 0.0
        assert res.breakdown.control_loss == pytest.approx(free.breakdown.control_loss, abs=1e-3)

    def test_feasible_when_converged(self):
        rng = np.random.default_rng(5)
        for k in range(4):
            net = random_graph(rng, 8, 0.3, acyclic=bool(k % 2))
            S = NodeSelection.all(net)
            budget = 0.3 * float(net.values.sum())
            for sense in ("eq", "ineq"):
                prob = InterventionProblem(net, S, sel(0, 1, 2), LossConfig(budget=budget, sense=sense))
                res = optimize_budget(prob)
                if res.converged:
                    assert abs(res.violation) <= ALConfig().tolerance(budget)

    def test_outer_schedule(self, chain_problem):
        res = optimize_budget(chain_problem.with_config(LossConfig(budget=2.0, sense="eq")))
        first, second = res.outer[0], res.outer[1]
        assert (first["rho"], first["alpha"]) == (1.0, 0.0)
        assert second["alpha"] == pytest.approx(abs(first["violation"]))
        for prev, cur in zip(res.outer, res.outer[1:]):
            grew = cur["rho"] == prev["rho"] * 10
            assert grew or cur["rho"] == prev["rho"]

    def test_budget_estimate_init(self, chain_problem):
        res = optimize_budget(chain_problem.with_config(LossConfig(budget=2.0, sense="eq")),
                              config=OptimizerConfig(init="budget_estimate"))
        assert res.o[0] == pytest.approx(0.5, abs=1e-3)

    def test_unconverged_flag(self, chain_problem):
        res = optimize_budget(chain_problem.with_config(LossConfig(budget=2.0, sense="eq")),
                              ALConfig(max_outer=1), OptimizerConfig(max_steps=20))
        assert not res.converged and res.reason == "max_outer"


def test_best_of_picks_lowest(star_problem):
    prob = star_problem.with_config(LossConfig(lam=0.5))
    runs = [optimize(prob, OptimizerConfig(seed=s)) for s in range(3)]
    best = best_of(lambda c: optimize(prob, c), OptimizerConfig(seed=0))
    assert best.loss == min(r.loss for r in runs)


def test_pareto_monotone_oracle():
    rng = np.random.default_rng(21)
    for _ in range(3):
        net = random_graph(rng, 4, 0.5)
        prob = InterventionProblem(net, sel(0, 1), sel(1, 2, 3), LossConfig(lam=0.0))
        pts = [grid_optimum(prob, step=1e-2, lam=lam) for lam in (0.0, 0.05, 0.2, 1.0)]
        ctrl = [p[1] for p in pts]
        cost = [p[2] for p in pts]
        assert all(b >= a - 1e-12 for a, b in zip(ctrl, ctrl[1:]))
        assert all(b <= a + 1e-12 for a, b in zip(cost, cost[1:]))
