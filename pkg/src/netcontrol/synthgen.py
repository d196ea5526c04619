"""Seeded synthetic ownership networks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .network import OwnershipNetwork

_TINY = np.nextafter(0.0, 1.0)


@dataclass(frozen=True)
class StarSpec:
    """Extended star: a rooted tree of the given depth.

    ``branching`` is either one factor for every level or a list with one entry
    per level (``len == depth``).  ``trees > 1`` yields a forest of identical
    specs with independent weights.
    """

    depth: int
    branching: int | Sequence[int] = 2
    seed: int = 0
    trees: int = 1

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.trees < 1:
            raise ValueError("trees must be >= 1")
        b = self.per_level
        if len(b) != self.depth or min(b) < 1:
            raise ValueError("branching needs one factor >= 1 per level")

    @property
    def per_level(self) -> tuple[int, ...]:
        if isinstance(self.branching, int):
            return (self.branching,) * self.depth
        return tuple(int(x) for x in self.branching)

    @property
    def n_nodes(self) -> int:
        return self.trees * int(sum(np.prod(self.per_level[:d]) for d in range(self.depth + 1)))


def star_value(depth: int, level: int) -> float:
    """Node value ``2^(D - d + 1)``: the root is worth the most, halving per level."""
    return float(2.0 ** (depth - level + 1))


def generate_extended_star(spec: StarSpec) -> OwnershipNetwork:
    """Tree with parent->child edges of U(0,1) weight, nodes numbered breadth-first."""
    rng = np.random.default_rng(spec.seed)
    ids, values, attrs, edges = [], [], [], []
    for t in range(spec.trees):
        root = len(ids)
        ids.append(root)
        values.append(star_value(spec.depth, 0))
        attrs.append({"level": "0", "tree": str(t)})
        frontier = [root]
        for level, b in enumerate(spec.per_level, start=1):
            nxt = []
            for parent in frontier:
                for _ in range(b):
                    child = len(ids)
                    ids.append(child)
                    values.append(star_value(spec.depth, level))
                    attrs.append({"level": str(level), "tree": str(t)})
                    edges.append((parent, child, rng.uniform(_TINY, 1.0)))
                    nxt.append(child)
            frontier = nxt
    return OwnershipNetwork.from_edges(ids, values, edges, attrs)


def generate_random_network(
    n: int,
    edge_prob: float,
    seed: int = 0,
    acyclic: bool = True,
    max_column: float = 1.0,
    groups: Sequence[str] | None = None,
    group_key: str = "group",
) -> OwnershipNetwork:
    """Erdos-Renyi style ownership network with U(0,1) weights and U(0,10) values.

    With ``acyclic`` the edges follow a random topological order.  Columns
    whose incoming weight exceeds ``max_column`` are rescaled to sum to it;
    keep ``max_column < 1`` for cyclic graphs so every cycle leaks.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    rank = np.empty(n, dtype=int)
    rank[order] = np.arange(n)
    W = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j or (acyclic and rank[i] >= rank[j]):
                continue
            if rng.random() < edge_prob:
                W[i, j] = rng.uniform(_TINY, 1.0)
    col = W.sum(axis=0)
    over = col > max_column
    W[:, over] *= max_column / col[over]
    values = rng.uniform(0.0, 10.0, size=n)
    attrs = None
    if groups:
        picks = rng.integers(len(groups), size=n)
        attrs = [{group_key: groups[k]} for k in picks]
    src, dst = np.nonzero(W)
    return OwnershipNetwork.from_edges(
        range(n), values, zip(src.tolist(), dst.tolist(), W[src, dst].tolist()), attrs
    )


def generate_random_dag(n: int, edge_prob: float, seed: int = 0, **kwargs) -> OwnershipNetwork:
    return generate_random_network(n, edge_prob, seed, acyclic=True, **kwargs)
