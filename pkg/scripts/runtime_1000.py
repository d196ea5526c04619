"""Wall-clock time of one lam optimisation on a sparse cyclic network.

    python3 scripts/runtime_1000.py --n 1000 --targets 100
"""

import argparse
import time

import numpy as np

from netcontrol.network import NodeSelection
from netcontrol.objective import InterventionProblem, LossConfig
from netcontrol.optimizer import OptimizerConfig, optimize
from netcontrol.synthgen import generate_random_network


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--mean-degree", type=float, default=1.5)
    ap.add_argument("--targets", type=int, default=100)
    ap.add_argument("--lam", type=float, default=0.1)
    ap.add_argument("--max-steps", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    net = generate_random_network(args.n, args.mean_degree / args.n, seed=args.seed,
                                  acyclic=False, max_column=0.95)
    rng = np.random.default_rng(args.seed)
    T = NodeSelection(tuple(sorted(rng.choice(net.n, args.targets, replace=False))))
    prob = InterventionProblem(net, NodeSelection.all(net), T, LossConfig(lam=args.lam))
    t0 = time.perf_counter()
    res = optimize(prob, OptimizerConfig(max_steps=args.max_steps))
    dt = time.perf_counter() - t0
    print(f"{net.n} nodes, {net.n_edges} edges: {res.steps} steps in {dt:.1f}s "
          f"({1000 * dt / max(res.steps, 1):.1f} ms/step), stop={res.reason}, loss={res.loss:.4f}")


if __name__ == "__main__":
    main()
