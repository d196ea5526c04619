"""Control and cost along a lam grid on the extended star, with the root's share per point.

    python3 scripts/lambda_curve_star.py --out results/star_curve.csv
"""

import argparse
from pathlib import Path

import numpy as np

from netcontrol import NodeSelection
from netcontrol.objective import InterventionProblem, LossConfig, control_shares
from netcontrol.optimizer import OptimizerConfig, best_of, optimize
from netcontrol.reports import write_csv
from netcontrol.synthgen import StarSpec, generate_extended_star


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depth", type=int, default=2)
    ap.add_argument("--branching", type=int, default=3)
    ap.add_argument("--star-seed", type=int, default=1)
    ap.add_argument("--grid", default="0,0.1,0.25,0.5,0.75,1,1.5,2")
    ap.add_argument("--restarts", type=int, default=3)
    ap.add_argument("--out", default="results/star_curve.csv")
    args = ap.parse_args()

    net = generate_extended_star(StarSpec(args.depth, args.branching, args.star_seed))
    S = NodeSelection.all(net)
    levels = np.array([int(a["level"]) for a in net.attributes])
    header = ["lambda", "control_pct", "cost", "root_share",
              *(f"spend_level_{d}" for d in range(args.depth + 1))]
    rows = []
    for lam in (float(x) for x in args.grid.split(",")):
        prob = InterventionProblem(net, S, S, LossConfig(lam=lam))
        res = best_of(lambda c: optimize(prob, c), OptimizerConfig(), args.restarts)
        spend = res.o * net.values
        share = control_shares(res.control.total, prob)["control_pct"]
        rows.append([lam, round(share, 4), round(res.breakdown.cost_loss, 4),
                     round(res.o[0] / prob.o_max[0], 4),
                     *(round(float(spend[levels == d].sum()), 4) for d in range(args.depth + 1))])
        print("\t".join(str(x) for x in rows[-1]))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(args.out, header, rows)


if __name__ == "__main__":
    main()
