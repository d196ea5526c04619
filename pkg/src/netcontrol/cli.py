"""Command-line front end.

Exit codes: 0 ok, 1 gradient check failed, 2 invalid input, 3 singular
ownership, 4 diverged, 5 budget constraint not met.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import reports
from .backbone import SingularOwnership
from .gradient import grad_check
from .network import (
    NetworkError,
    NodeSelection,
    OwnershipNetwork,
    in_component,
    largest_connected_component,
    load_network,
    save_network,
    select_nodes,
)
from .objective import InterventionProblem, LossConfig
from .optimizer import (
    ALConfig,
    Diverged,
    OptimizerConfig,
    best_of,
    budget_key,
    lambda_sweep,
    optimize,
    optimize_budget,
)
from .synthgen import StarSpec, generate_extended_star, generate_random_network

log = logging.getLogger("netcontrol")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_SINGULAR, EXIT_DIVERGED, EXIT_UNCONVERGED = 0, 1, 2, 3, 4, 5

DEFAULTS = {
    "sources": "all",
    "targets": "all",
    "exclude": [],
    "cost": "value",
    "constraint": "eq",
    "seed": 0,
    "lr": 0.1,
    "max_steps": 3000,
    "c_cut": 0.5,
    "out": None,
    "normalize_columns": False,
    "warm_start": False,
    "in_component": False,
    "lcc": False,
    "restarts": 1,
    "auto_retry": False,
    "jobs": 1,
    "group_by": None,
    "init": "gaussian",
    "max_outer": 20,
    "budget_tol": None,
    "lambda": None,
    "lambda_grid": None,
    "budget": None,
}


class InvalidInput(Exception):
    pass


# -- manifest ----------------------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidInput(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise InvalidInput("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from the config file, then from DEFAULTS."""
    cfg = _load_config(getattr(args, "config", None))
    for key, default in DEFAULTS.items():
        if getattr(args, key, None) in (None, []) or (key == "exclude" and not args.exclude):
            setattr(args, key, cfg.get(key, default))
    for key in ("nodes", "edges"):
        if getattr(args, key, None) is None and key in cfg:
            setattr(args, key, cfg[key])
    return args


def _selection(net: OwnershipNetwork, spec: str, excludes=()) -> NodeSelection:
    spec = spec.strip()
    if spec == "all":
        keep = np.ones(net.n, dtype=bool)
    elif spec.startswith("ids:"):
        keep = NodeSelection.of_ids(net, [s for s in spec[4:].split(",") if s]).mask(net.n)
    else:
        keep = select_nodes(net, spec).mask(net.n)
    for pred in excludes:
        keep &= select_nodes(net, pred, complement=True).mask(net.n)
    return NodeSelection(tuple(np.flatnonzero(keep)), spec)


def build_problem(args) -> InterventionProblem:
    if not args.nodes or not args.edges:
        raise InvalidInput("--nodes and --edges are required")
    net = load_network(args.nodes, args.edges, normalize_columns=args.normalize_columns)
    if args.in_component:
        targets = _selection(net, args.targets)
        if not len(targets):
            raise InvalidInput("target selection is empty")
        net = net.subnetwork(in_component(net, targets).indices)
    if args.lcc:
        net = largest_connected_component(net)
    sources = _selection(net, args.sources, args.exclude)
    targets = _selection(net, args.targets)
    if not len(sources):
        raise InvalidInput("source selection is empty")
    if not len(targets):
        raise InvalidInput("target selection is empty")
    if args.budget is not None:
        config = LossConfig(budget=float(args.budget), cost="value", sense=args.constraint)
    else:
        lam = args.__dict__.get("lambda")
        config = LossConfig(lam=float(lam if lam is not None else 0.0), cost=args.cost)
    return InterventionProblem(net, sources, targets, config)


def optimizer_config(args) -> OptimizerConfig:
    return OptimizerConfig(
        lr=float(args.lr), max_steps=int(args.max_steps), seed=int(args.seed),
        init=args.init, auto_retry=bool(args.auto_retry),
        budget_hint=float(args.budget) if args.budget is not None else None,
    )


def _inputs(args) -> dict:
    return {"nodes": str(args.nodes), "edges": str(args.edges), "sources": args.sources,
            "targets": args.targets, "exclude": list(args.exclude)}


# -- commands ----------------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.kind == "star":
        branching = [int(b) for b in args.branching.split(",")]
        spec = StarSpec(args.depth, branching[0] if len(branching) == 1 else branching,
                        args.seed, args.trees)
        net = generate_extended_star(spec)
    else:
        groups = args.groups.split(",") if args.groups else None
        net = generate_random_network(
            args.n, args.edge_prob, args.seed, acyclic=args.kind == "dag",
            max_column=args.max_column, groups=groups, group_key=args.group_key,
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_network(net, out / "nodes.csv", out / "edges.csv")
    print(f"wrote {net.n} nodes, {net.n_edges} edges to {out}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    problem = build_problem(args)
    if problem.config.budget_mode:
        raise InvalidInput("optimize takes --lambda; use the budget command for --budget")
    cfg = optimizer_config(args)
    result = best_of(lambda c: optimize(problem, c), cfg, args.restarts)
    doc = reports.write_result(Path(args.out or "out"), problem, result, args.c_cut, args.group_by,
                               {"inputs": _inputs(args)})
    log.info("optimize: %.3fs wall", result.wall_time)
    _echo(doc)
    if not result.converged:
        log.warning("stopped at the step cap (%d steps) before the loss settled", result.steps)
    return EXIT_OK


def cmd_sweep(args) -> int:
    grid = args.lambda_grid
    if isinstance(grid, str):
        grid = [g for g in grid.split(",") if g.strip()]
    if not grid:
        raise InvalidInput("--lambda-grid is empty")
    try:
        lams = [float(g) for g in grid]
    except ValueError as e:
        raise InvalidInput(f"bad --lambda-grid: {e}") from e
    problem = build_problem(args)
    try:
        points = lambda_sweep(problem, lams, optimizer_config(args), args.warm_start, args.jobs)
    except ValueError as e:
        raise InvalidInput(str(e)) from e
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    header, rows = reports.curve_rows(problem, points)
    reports.write_csv(out / "curve.csv", header, rows)
    reports.write_json(out / "summary.json", {
        "mode": "sweep", "lambdas": lams, "seed": int(args.seed), "warm_start": bool(args.warm_start),
        "failed": [pt.lam for pt in points if pt.result is None], "inputs": _inputs(args),
    })
    for r in rows:
        print("\t".join(str(x) for x in r[:7]))
    failed = [pt for pt in points if pt.result is None]
    if failed and len(failed) == len(points):
        return EXIT_SINGULAR if "Singular" in (failed[0].error or "") else EXIT_DIVERGED
    return EXIT_OK


def cmd_budget(args) -> int:
    if args.budget is None:
        raise InvalidInput("budget needs --budget")
    if float(args.budget) < 0:
        raise InvalidInput("--budget must be >= 0")
    problem = build_problem(args)
    al = ALConfig(max_outer=int(args.max_outer), tol=args.budget_tol)
    cfg = optimizer_config(args)
    result = best_of(lambda c: optimize_budget(problem, al, c), cfg, args.restarts, key=budget_key)
    doc = reports.write_result(Path(args.out or "out"), problem, result, args.c_cut, args.group_by,
                               {"inputs": _inputs(args), "tolerance": al.tolerance(problem.config.budget)})
    _echo(doc)
    if not result.converged:
        print(f"budget constraint not met: |H| = {abs(result.violation):.6g}", file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


def cmd_report_groups(args) -> int:
    path = Path(args.result)
    if path.is_dir():
        path = path / "nodes.csv"
    if not path.is_file():
        raise InvalidInput(f"no node report at {path}")
    table = reports.read_node_table(path)
    try:
        header, rows = reports.group_rows(table, args.group_by)
    except KeyError as e:
        raise InvalidInput(str(e)) from e
    out = Path(args.out) if args.out else path.parent
    out.mkdir(parents=True, exist_ok=True)
    reports.write_csv(out / "groups.csv", header, rows)
    print("\t".join(header))
    for r in rows:
        print("\t".join(str(x) for x in r))
    return EXIT_OK


def cmd_grad_check(args) -> int:
    problem = build_problem(args)
    rng = np.random.default_rng(args.seed)
    p_u = rng.normal(0.0, 1.0, size=len(problem.sources))
    rho = alpha = None
    if problem.config.budget_mode:
        rho, alpha = 1.0, 0.0
    rep = grad_check(problem, p_u, args.step, args.rtol, args.atol, rho, alpha, args.perturb)
    ids = [problem.network.node_ids[k] for k in problem.sources]
    header = ["id", "p_u", "analytic", "finite_difference", "abs_dev"]
    rows = [[i, repr(float(p)), repr(float(a)), repr(float(f)), repr(float(abs(a - f)))]
            for i, p, a, f in zip(ids, p_u, rep.grad, rep.fd_grad)]
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        reports.write_csv(Path(args.out) / "grad_check.csv", header, rows)
    print("\t".join(header))
    for r in rows:
        print("\t".join(r))
    verdict = "PASS" if rep.passed else "FAIL"
    print(f"{verdict} max_abs={rep.max_abs_dev:.3e} max_rel={rep.max_rel_dev:.3e} rtol={args.rtol} atol={args.atol}")
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def _echo(doc: dict) -> None:
    keys = ("mode", "converged", "reason", "steps", "control_loss", "cost", "control_pct",
            "control_pct_available", "violation")
    print(" ".join(f"{k}={doc[k]}" for k in keys if k in doc))


# -- parser ------------------------------------------------------------------------


def _problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with flag values; flags override it")
    p.add_argument("--nodes", help="nodes table: id,value[,attributes...]")
    p.add_argument("--edges", help="edge list: source,target,weight")
    p.add_argument("--normalize-columns", action="store_true", default=None,
                   help="rescale columns whose incoming ownership exceeds 1")
    p.add_argument("--sources", help="'all', 'ids:a,b,c' or predicate 'key=v1|v2&key2=v'")
    p.add_argument("--targets", help="same syntax as --sources")
    p.add_argument("--exclude", action="append", default=[],
                   help="drop sources matching this predicate (repeatable)")
    p.add_argument("--in-component", action="store_true", default=None,
                   help="restrict the network to the in-component of the targets")
    p.add_argument("--lcc", action="store_true", default=None,
                   help="keep only the largest weakly connected component")
    p.add_argument("--cost", choices=["value", "l1", "l2"])
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--init", choices=["gaussian", "budget_estimate"])
    p.add_argument("--auto-retry", action="store_true", default=None,
                   help="retry with the other learning rates on divergence or stall")
    p.add_argument("--c-cut", type=float)
    p.add_argument("--out")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netcontrol", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic network")
    g.add_argument("--kind", choices=["star", "dag", "random"], default="star")
    g.add_argument("--depth", type=int, default=2)
    g.add_argument("--branching", default="3", help="one factor or comma list per level")
    g.add_argument("--trees", type=int, default=1)
    g.add_argument("--n", type=int, default=20)
    g.add_argument("--edge-prob", type=float, default=0.2)
    g.add_argument("--max-column", type=float, default=1.0)
    g.add_argument("--groups", help="comma list of group labels assigned at random")
    g.add_argument("--group-key", default="group")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="network")
    g.set_defaults(func=cmd_generate)

    o = sub.add_parser("optimize", help="single lambda optimisation")
    _problem_flags(o)
    o.add_argument("--lambda", type=float, dest="lambda")
    o.add_argument("--restarts", type=int)
    o.add_argument("--group-by")
    o.set_defaults(func=cmd_optimize)

    s = sub.add_parser("sweep", help="lambda curve")
    _problem_flags(s)
    s.add_argument("--lambda-grid", help="comma separated, ascending")
    s.add_argument("--warm-start", action="store_true", default=None)
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("budget", help="budget-constrained optimisation")
    _problem_flags(b)
    b.add_argument("--budget", type=float)
    b.add_argument("--constraint", choices=["eq", "ineq"])
    b.add_argument("--max-outer", type=int)
    b.add_argument("--budget-tol", type=float)
    b.add_argument("--restarts", type=int)
    b.add_argument("--group-by")
    b.set_defaults(func=cmd_budget)

    r = sub.add_parser("report-groups", help="aggregate a node report by attribute")
    r.add_argument("--result", required=True, help="result directory or nodes.csv")
    r.add_argument("--group-by", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report_groups)

    c = sub.add_parser("grad-check", help="analytic vs finite-difference gradient")
    _problem_flags(c)
    c.add_argument("--lambda", type=float, dest="lambda")
    c.add_argument("--budget", type=float)
    c.add_argument("--constraint", choices=["eq", "ineq"])
    c.add_argument("--step", type=float, default=1e-5)
    c.add_argument("--rtol", type=float, default=1e-4)
    c.add_argument("--atol", type=float, default=1e-8)
    c.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command != "generate" and args.command != "report-groups":
        try:
            resolve(args)
        except InvalidInput as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_INVALID
    try:
        return args.func(args)
    except (InvalidInput, NetworkError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except SingularOwnership as e:
        print(f"error: singular ownership: {e}", file=sys.stderr)
        return EXIT_SINGULAR
    except Diverged as e:
        print(f"error: diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
