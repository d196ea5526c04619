"""Tabular reports of an optimisation result: per node, per group, trajectory, lam-curve."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .objective import InterventionProblem, control_set_size, control_shares
from .optimizer import OptimizationResult, SweepPoint


def _num(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_json(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def node_rows(problem: InterventionProblem, result: OptimizationResult) -> tuple[list[str], list[list[str]]]:
    net = problem.network
    keys = list(net.attribute_keys)
    src = problem.sources.mask(net.n)
    tgt = problem.targets.mask(net.n)
    c = result.control.total
    o = result.o
    header = ["id", *keys, "value", "o_max", "direct", "indirect", "total", "spend", "source", "target"]
    rows = []
    for k, nid in enumerate(net.node_ids):
        rows.append(
            [nid, *(net.attributes[k].get(a, "") for a in keys),
             _num(net.values[k]), _num(problem.o_max[k]), _num(o[k]), _num(c[k] - o[k]),
             _num(c[k]), _num(o[k] * net.values[k]), int(src[k]), int(tgt[k])]
        )
    return header, rows


def group_rows(node_table: list[dict], attribute: str) -> tuple[list[str], list[list[str]]]:
    """Aggregate a per-node table (as dicts) by one attribute column."""
    if not node_table:
        return ["group", "nodes", "spend", "direct", "indirect", "total"], []
    if attribute not in node_table[0]:
        raise KeyError(f"unknown attribute {attribute!r}")
    groups: dict[str, list[dict]] = {}
    for row in node_table:
        groups.setdefault(row[attribute], []).append(row)
    header = [attribute, "nodes", "spend", "direct", "indirect", "total"]
    rows = []
    for g in sorted(groups):
        members = groups[g]
        rows.append(
            [g, len(members),
             *(_num(math.fsum(float(m[col]) for m in members))
               for col in ("spend", "direct", "indirect", "total"))]
        )
    return header, rows


def read_node_table(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def trajectory_rows(result: OptimizationResult) -> tuple[list[str], list[list[str]]]:
    header = ["step", "total", "control_loss", "cost_loss", "violation", "rho", "alpha"]
    rows = [
        [k, _num(b.total), _num(b.control_loss), _num(b.cost_loss), _num(b.violation),
         _num(b.rho), _num(b.alpha)]
        for k, b in enumerate(result.trajectory)
    ]
    return header, rows


def summary(problem: InterventionProblem, result: OptimizationResult, c_cut: float = 0.5) -> dict:
    net = problem.network
    cfg = problem.config
    bd = result.breakdown
    c = result.control.total
    doc = {
        "mode": "budget" if cfg.budget_mode else "lambda",
        "lambda": cfg.lam,
        "budget": cfg.budget,
        "cost_variant": cfg.cost,
        "constraint": cfg.sense if cfg.budget_mode else None,
        "nodes": net.n,
        "edges": net.n_edges,
        "sources": len(problem.sources),
        "targets": len(problem.targets),
        "converged": result.converged,
        "reason": result.reason,
        "steps": result.steps,
        "lr": result.lr,
        "seed": result.seed,
        "loss": bd.total,
        "control_loss": bd.control_loss,
        "cost": bd.cost_loss,
        "spend": math.fsum(result.o * net.values),
        "violation": bd.violation,
        "c_cut": c_cut,
        "control_set_size": control_set_size(c, c_cut),
        **control_shares(c, problem),
    }
    if cfg.budget_mode:
        doc["rho"] = bd.rho
        doc["alpha"] = bd.alpha
        doc["outer"] = result.outer
    return doc


def curve_rows(problem: InterventionProblem, points: list[SweepPoint]) -> tuple[list[str], list[list]]:
    header = ["lambda", "control_pct", "control_pct_available", "cost", "control_loss",
              "converged", "reason", "steps", "error"]
    rows = []
    for pt in points:
        r = pt.result
        if r is None:
            rows.append([_num(pt.lam), "", "", "", "", 0, "failed", "", pt.error])
            continue
        sh = control_shares(r.control.total, problem)
        rows.append(
            [_num(pt.lam), _num(sh["control_pct"]), _num(sh["control_pct_available"]),
             _num(r.breakdown.cost_loss), _num(r.breakdown.control_loss),
             int(r.converged), r.reason, r.steps, ""]
        )
    return header, rows


def write_result(out: Path, problem: InterventionProblem, result: OptimizationResult,
                 c_cut: float = 0.5, group_by: str | None = None, extra: dict | None = None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    doc = summary(problem, result, c_cut)
    if extra:
        doc.update(extra)
    write_json(out / "summary.json", doc)
    header, rows = node_rows(problem, result)
    write_csv(out / "nodes.csv", header, rows)
    write_csv(out / "trajectory.csv", *trajectory_rows(result))
    if group_by:
        table = [dict(zip(header, map(str, r))) for r in rows]
        write_csv(out / "groups.csv", *group_rows(table, group_by))
    return doc


def as_array(rows: list[dict], col: str) -> np.ndarray:
    return np.array([float(r[col]) for r in rows])
