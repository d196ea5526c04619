"""Budget-constrained control of one group of firms as source groups are excluded.

A synthetic network with a ``country`` attribute stands in for a real
ownership register.  The budget equals the total value of the targets.

    python3 scripts/policy_scenarios.py --n 60 --target A
"""

import argparse

import numpy as np

from netcontrol.network import NodeSelection, select_nodes
from netcontrol.objective import InterventionProblem, LossConfig
from netcontrol.optimizer import OptimizerConfig, best_of, budget_key, optimize_budget
from netcontrol.synthgen import generate_random_network


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=30)
    ap.add_argument("--edge-prob", type=float, default=0.15)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--groups", default="A,B,C")
    ap.add_argument("--target", default="A")
    ap.add_argument("--restarts", type=int, default=3)
    args = ap.parse_args()

    groups = args.groups.split(",")
    net = generate_random_network(args.n, args.edge_prob, args.seed, groups=groups, group_key="country")
    T = select_nodes(net, f"country={args.target}")
    budget = float(net.values[T.array].sum())
    config = LossConfig(budget=budget, sense="ineq")
    print(f"{net.n} nodes, {net.n_edges} edges, {len(T)} targets, budget {budget:.3f}")

    keep = np.ones(net.n, dtype=bool)
    excluded = []
    # exclude the target group first, then the others in order
    order = [args.target] + [g for g in groups if g != args.target]
    for step in range(len(order)):
        S = NodeSelection(tuple(np.flatnonzero(keep)))
        if not len(S):
            break
        prob = InterventionProblem(net, S, T, config)
        res = best_of(lambda c: optimize_budget(prob, config=c), OptimizerConfig(), args.restarts, budget_key)
        pct = 100 * (1 - res.breakdown.control_loss / len(T))
        label = "all sources" if not excluded else "exclude " + "+".join(excluded)
        print(f"{label:<24} control {pct:6.2f}%  spend {res.breakdown.cost_loss:8.3f}  "
              f"|H| {abs(res.violation):.2e}  converged={res.converged}")
        excluded.append(order[step])
        keep &= select_nodes(net, f"country={order[step]}", complement=True).mask(net.n)


if __name__ == "__main__":
    main()
