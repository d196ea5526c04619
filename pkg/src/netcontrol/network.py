"""Ownership network data model, file I/O and graph preprocessing.

Edge weight ``a[i, j]`` is the fraction of node ``j`` held by node ``i``.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import csgraph

log = logging.getLogger(__name__)

COLUMN_TOL = 1e-9


class NetworkError(ValueError):
    """Invalid network input (bad file, invariant violation, unknown key)."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def node_sort_key(node_id: str):
    """Numeric ids order numerically, everything else lexically after them."""
    try:
        return (0, int(node_id), "")
    except ValueError:
        return (1, 0, node_id)


@dataclass(frozen=True, eq=False)
class OwnershipNetwork:
    node_ids: tuple[str, ...]
    values: np.ndarray
    sources: np.ndarray
    targets: np.ndarray
    weights: np.ndarray
    attributes: tuple[Mapping[str, str], ...] = ()

    @classmethod
    def from_edges(
        cls,
        node_ids: Sequence,
        values: Sequence[float],
        edges: Iterable[tuple[object, object, float]] = (),
        attributes: Sequence[Mapping[str, str]] | None = None,
        normalize_columns: bool = False,
    ) -> "OwnershipNetwork":
        """Build and validate a network from ids, values and ``(owner, owned, weight)`` triples."""
        ids = tuple(str(i) for i in node_ids)
        index: dict[str, int] = {}
        for k, nid in enumerate(ids):
            if nid in index:
                raise NetworkError(f"duplicate node id {nid!r}")
            index[nid] = k
        vals = np.asarray(values, dtype=float)
        if vals.shape != (len(ids),):
            raise NetworkError("values must have one entry per node")
        for nid, v in zip(ids, vals):
            if not np.isfinite(v):
                raise NetworkError(f"node {nid!r}: missing or non-finite value")
            if v < 0:
                raise NetworkError(f"node {nid!r}: negative value {v}")

        src, dst, w = [], [], []
        seen = set()
        for s, t, weight in edges:
            s, t = str(s), str(t)
            for end in (s, t):
                if end not in index:
                    raise NetworkError(f"edge {s}->{t}: unknown node {end!r}")
            weight = float(weight)
            if s == t:
                raise NetworkError(f"self-loop at node {s!r}")
            if not 0.0 <= weight <= 1.0:
                raise NetworkError(f"edge {s}->{t}: weight {weight} outside [0, 1]")
            if (s, t) in seen:
                raise NetworkError(f"duplicate edge {s}->{t}")
            seen.add((s, t))
            src.append(index[s])
            dst.append(index[t])
            w.append(weight)
        src_a = np.asarray(src, dtype=np.int64)
        dst_a = np.asarray(dst, dtype=np.int64)
        w_a = np.asarray(w, dtype=float)

        col = np.bincount(dst_a, weights=w_a, minlength=len(ids))
        over = np.flatnonzero(col > 1.0 + COLUMN_TOL)
        if over.size:
            if not normalize_columns:
                j = over[0]
                raise NetworkError(
                    f"column sum {col[j]:.12g} at node {ids[j]!r} exceeds 1 "
                    f"({over.size} node(s) affected; use normalize_columns to rescale)"
                )
            scale = np.ones(len(ids))
            scale[over] = 1.0 / col[over]
            w_a = w_a * scale[dst_a]
            log.warning("rescaled %d column(s) with incoming sum > 1", over.size)

        if attributes is None:
            attrs: tuple[Mapping[str, str], ...] = tuple({} for _ in ids)
        else:
            attrs = tuple({str(k): str(v) for k, v in a.items()} for a in attributes)
            if len(attrs) != len(ids):
                raise NetworkError("attributes must have one entry per node")
        return cls(ids, _freeze(vals), _freeze(src_a), _freeze(dst_a), _freeze(w_a), attrs)

    def __post_init__(self):
        if not self.attributes:
            object.__setattr__(self, "attributes", tuple({} for _ in self.node_ids))

    @property
    def n(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.weights)

    @cached_property
    def index(self) -> dict[str, int]:
        return {nid: k for k, nid in enumerate(self.node_ids)}

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Sparse ``a[i, j]``; rows are holdings of ``i``."""
        return sparse.csr_matrix(
            (self.weights, (self.sources, self.targets)), shape=(self.n, self.n)
        )

    @cached_property
    def adjacency_csc(self) -> sparse.csc_matrix:
        """Same matrix in column-major form; columns are the owners of ``j``."""
        return self.adjacency.tocsc()

    @cached_property
    def dense(self) -> np.ndarray:
        return _freeze(self.adjacency.toarray())

    @cached_property
    def column_sums(self) -> np.ndarray:
        """Incoming ownership ``s_j``: total fraction of ``j`` held inside the network."""
        return _freeze(np.bincount(self.targets, weights=self.weights, minlength=self.n))

    @cached_property
    def in_degree(self) -> np.ndarray:
        return _freeze(np.bincount(self.targets, minlength=self.n))

    @cached_property
    def attribute_keys(self) -> tuple[str, ...]:
        keys: dict[str, None] = {}
        for a in self.attributes:
            keys.update(dict.fromkeys(a))
        return tuple(keys)

    def owners(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        csc = self.adjacency_csc
        sl = slice(csc.indptr[j], csc.indptr[j + 1])
        return csc.indices[sl], csc.data[sl]

    def holdings(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        a = self.adjacency
        sl = slice(a.indptr[i], a.indptr[i + 1])
        return a.indices[sl], a.data[sl]

    def edges(self) -> list[tuple[str, str, float]]:
        return [
            (self.node_ids[s], self.node_ids[t], float(w))
            for s, t, w in zip(self.sources, self.targets, self.weights)
        ]

    def subnetwork(self, nodes: Iterable[int]) -> "OwnershipNetwork":
        """Induced subnetwork, keeping the original node order."""
        keep = np.zeros(self.n, dtype=bool)
        keep[list(nodes)] = True
        remap = np.cumsum(keep) - 1
        mask = keep[self.sources] & keep[self.targets]
        kept = np.flatnonzero(keep)
        return OwnershipNetwork(
            tuple(self.node_ids[k] for k in kept),
            _freeze(self.values[kept]),
            _freeze(remap[self.sources[mask]]),
            _freeze(remap[self.targets[mask]]),
            _freeze(self.weights[mask]),
            tuple(self.attributes[k] for k in kept),
        )


@dataclass(frozen=True)
class NodeSelection:
    """Ordered, deduplicated set of node indices plus how it was built."""

    indices: tuple[int, ...]
    provenance: str = "explicit"
    warning: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(sorted(set(int(i) for i in self.indices))))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, k) -> bool:
        return k in set(self.indices)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[list(self.indices)] = True
        return m

    @classmethod
    def all(cls, net: OwnershipNetwork) -> "NodeSelection":
        return cls(tuple(range(net.n)), "all")

    @classmethod
    def of_ids(cls, net: OwnershipNetwork, ids: Iterable) -> "NodeSelection":
        try:
            return cls(tuple(net.index[str(i)] for i in ids), "explicit")
        except KeyError as e:
            raise NetworkError(f"unknown node id {e.args[0]!r}") from None


# -- file I/O ------------------------------------------------------------------


def _read_table(path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise NetworkError(f"no such file: {path}")
    try:
        with open(path, encoding="utf-8") as f:
            header = f.readline()
        sep = next((d for d in ("\t", ",", ";", "|") if d in header), ",")
        return pd.read_csv(path, sep=sep, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise NetworkError(f"{path}: {e}") from e


def load_network(nodes_file, edges_file, normalize_columns: bool = False) -> OwnershipNetwork:
    """Read a nodes table (``id,value,...``) and an edge list (``source,target,weight``)."""
    nodes = _read_table(nodes_file)
    nodes.columns = [c.strip() for c in nodes.columns]
    for col in ("id", "value"):
        if col not in nodes.columns:
            raise NetworkError(f"{nodes_file}: missing column {col!r}")
    ids = [s.strip() for s in nodes["id"]]
    values = []
    for nid, raw in zip(ids, nodes["value"]):
        raw = raw.strip()
        if not raw:
            raise NetworkError(f"node {nid!r}: missing value")
        try:
            values.append(float(raw))
        except ValueError:
            raise NetworkError(f"node {nid!r}: value {raw!r} is not a number") from None
    extra = [c for c in nodes.columns if c not in ("id", "value")]
    attributes = [{c: row[c] for c in extra} for _, row in nodes.iterrows()] if extra else None

    edges = _read_table(edges_file)
    edges.columns = [c.strip() for c in edges.columns]
    for col in ("source", "target", "weight"):
        if col not in edges.columns:
            raise NetworkError(f"{edges_file}: missing column {col!r}")
    triples = []
    for s, t, w in zip(edges["source"], edges["target"], edges["weight"]):
        try:
            weight = float(w)
        except ValueError:
            raise NetworkError(f"edge {s}->{t}: weight {w!r} is not a number") from None
        triples.append((s.strip(), t.strip(), weight))
    return OwnershipNetwork.from_edges(ids, values, triples, attributes, normalize_columns)


def save_network(net: OwnershipNetwork, nodes_file, edges_file) -> None:
    keys = net.attribute_keys
    nodes = pd.DataFrame(
        {
            "id": list(net.node_ids),
            "value": [repr(float(v)) for v in net.values],
            **{k: [a.get(k, "") for a in net.attributes] for k in keys},
        }
    )
    edges = pd.DataFrame(
        {
            "source": [net.node_ids[s] for s in net.sources],
            "target": [net.node_ids[t] for t in net.targets],
            "weight": [repr(float(w)) for w in net.weights],
        }
    )
    nodes.to_csv(nodes_file, index=False)
    edges.to_csv(edges_file, index=False)


# -- selection -----------------------------------------------------------------


def parse_predicate(text: str) -> list[tuple[str, frozenset[str]]]:
    """Parse ``key=v1|v2&key2=v3`` into a conjunction of membership clauses."""
    clauses = []
    for part in text.split("&"):
        if "=" not in part:
            raise NetworkError(f"bad predicate clause {part!r}, expected key=value")
        key, vals = part.split("=", 1)
        clauses.append((key.strip(), frozenset(v.strip() for v in vals.split("|"))))
    return clauses


def select_nodes(
    net: OwnershipNetwork,
    predicate: str | Mapping[str, object] | None = None,
    ids: Iterable | None = None,
    complement: bool = False,
) -> NodeSelection:
    """Select nodes by attribute predicate or explicit id list, optionally complemented.

    A mapping predicate ``{"country": "GB"}`` (or ``{"country": ["GB", "IE"]}``)
    is a conjunction over keys; string predicates use ``parse_predicate`` syntax.
    """
    if (predicate is None) == (ids is None):
        raise ValueError("give exactly one of predicate or ids")
    if ids is not None:
        hit = NodeSelection.of_ids(net, ids).mask(net.n)
        how = "explicit"
    else:
        if isinstance(predicate, str):
            clauses = parse_predicate(predicate)
        else:
            clauses = [
                (k, frozenset([v] if isinstance(v, str) else map(str, v)))
                for k, v in predicate.items()
            ]
        for key, _ in clauses:
            if key not in net.attribute_keys:
                raise NetworkError(f"unknown attribute key {key!r}")
        hit = np.array(
            [all(a.get(k) in vals for k, vals in clauses) for a in net.attributes], dtype=bool
        )
        how = "predicate"
    if complement:
        hit = ~hit
        how = f"complement({how})"
    sel = np.flatnonzero(hit)
    warning = None
    if sel.size == 0:
        warning = "empty selection"
        log.warning("node selection %s is empty", how)
    return NodeSelection(tuple(sel), how, warning)


# -- reachability and components -------------------------------------------------


def _reach(graph: sparse.csr_matrix, start: Iterable[int]) -> np.ndarray:
    seen = np.zeros(graph.shape[0], dtype=bool)
    queue = deque(start)
    seen[list(queue)] = True
    indptr, indices = graph.indptr, graph.indices
    while queue:
        i = queue.popleft()
        for j in indices[indptr[i] : indptr[i + 1]]:
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return np.flatnonzero(seen)


def _structure(net: OwnershipNetwork) -> sparse.csr_matrix:
    # Zero-weight edges still count as paths.
    return sparse.csr_matrix(
        (np.ones(net.n_edges), (net.sources, net.targets)), shape=(net.n, net.n)
    )


def reachable_from_sources(net: OwnershipNetwork, sources: NodeSelection) -> NodeSelection:
    return NodeSelection(tuple(_reach(_structure(net), sources.indices)), "reachable")


def in_component(net: OwnershipNetwork, targets: NodeSelection) -> NodeSelection:
    """Every node with a directed ownership path into ``targets`` (targets included)."""
    if len(targets) == 0:
        raise NetworkError("in_component needs a non-empty target set")
    rev = _structure(net).T.tocsr()
    return NodeSelection(tuple(_reach(rev, targets.indices)), "in_component")


def largest_connected_component(net: OwnershipNetwork) -> OwnershipNetwork:
    """Largest weakly connected component; ties go to the component with the smallest id."""
    if net.n == 0:
        return net
    _, labels = csgraph.connected_components(_structure(net), directed=True, connection="weak")
    best = None
    for lab in np.unique(labels):
        members = np.flatnonzero(labels == lab)
        key = (-members.size, min(node_sort_key(net.node_ids[k]) for k in members))
        if best is None or key < best[0]:
            best = (key, members)
    return net.subnetwork(best[1])


def strongly_connected_components(net: OwnershipNetwork) -> list[np.ndarray]:
    _, labels = csgraph.connected_components(_structure(net), directed=True, connection="strong")
    return [np.flatnonzero(labels == lab) for lab in np.unique(labels)]


# -- acquirable shares -------------------------------------------------------------


def compute_o_max(net: OwnershipNetwork) -> np.ndarray:
    """Largest acquirable fraction per node: incoming ownership, or 1 for roots."""
    o_max = np.minimum(1.0, np.asarray(net.column_sums, dtype=float))
    o_max[net.in_degree == 0] = 1.0
    return o_max
