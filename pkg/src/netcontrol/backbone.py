"""Control propagation through an ownership network.

Control of the external agent solves ``c = o + B(o)^T c`` where ``B(o)`` is the
ownership matrix after the agent bought ``o_j`` of every node ``j`` uniformly
from the existing owners.  Equivalently ``c^T = o^T (I - B)^{-1}``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .network import (
    NodeSelection,
    OwnershipNetwork,
    compute_o_max,
    reachable_from_sources,
    strongly_connected_components,
)

SPECTRAL_EPS = 1e-9
RESIDUAL_TOL = 1e-8
BOUND_TOL = 1e-12


class SingularOwnership(RuntimeError):
    """``I - B`` is (numerically) singular, i.e. some ownership cycle has no leakage."""

    def __init__(self, message: str, component: tuple[str, ...] = ()):
        super().__init__(message)
        self.component = component


@dataclass(frozen=True)
class ControlVector:
    total: np.ndarray
    direct: np.ndarray

    @property
    def indirect(self) -> np.ndarray:
        return self.total - self.direct


def adjust_ownership(net: OwnershipNetwork, o: np.ndarray, o_max: np.ndarray | None = None) -> np.ndarray:
    """Dense ``B`` with column ``j`` scaled by ``1 - o_j``."""
    o = np.asarray(o, dtype=float)
    if o.shape != (net.n,):
        raise ValueError(f"intervention must have length {net.n}, got {o.shape}")
    if o_max is None:
        o_max = compute_o_max(net)
    bad = np.flatnonzero((o < -BOUND_TOL) | (o > o_max + BOUND_TOL))
    if bad.size:
        j = bad[0]
        raise ValueError(
            f"o[{net.node_ids[j]!r}] = {o[j]!r} outside [0, o_max={o_max[j]!r}]"
        )
    return net.dense * (1.0 - o)[None, :]


def _leakless_component(net: OwnershipNetwork, B: np.ndarray) -> tuple[str, ...]:
    for comp in strongly_connected_components(net):
        if comp.size < 2:
            continue
        inner = B[np.ix_(comp, comp)].sum(axis=0)
        if np.all(inner >= 1.0 - SPECTRAL_EPS):
            return tuple(net.node_ids[k] for k in comp)
    return ()


def _singular(net: OwnershipNetwork, B: np.ndarray, why: str) -> SingularOwnership:
    comp = _leakless_component(net, B)
    where = f"; cycle without leakage: {', '.join(comp)}" if comp else ""
    return SingularOwnership(f"I - B is singular ({why}){where}", comp)


def factorize(net: OwnershipNetwork, B: np.ndarray):
    """LU factors of ``I - B^T``; raises SingularOwnership on a vanishing pivot."""
    M = np.eye(net.n) - B.T
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(M, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if net.n and pivots.min() < SPECTRAL_EPS:
        raise _singular(net, B, f"pivot {pivots.min():.3g}")
    return lu, piv


def propagate(net: OwnershipNetwork, B: np.ndarray, o: np.ndarray, factors=None) -> ControlVector:
    o = np.asarray(o, dtype=float)
    if factors is None:
        factors = factorize(net, B)
    c = sla.lu_solve(factors, o, check_finite=False)
    resid = np.abs(c - B.T @ c - o).max(initial=0.0)
    if not np.isfinite(resid) or resid > RESIDUAL_TOL:
        raise _singular(net, B, f"residual {resid:.3g}")
    # Unreachable nodes get exactly zero; the solve leaves rounding dust there.
    support = NodeSelection(tuple(np.flatnonzero(o)))
    reach = reachable_from_sources(net, support).mask(net.n)
    c[~reach] = 0.0
    return ControlVector(total=c, direct=o.copy())


def propagate_bruteforce(net: OwnershipNetwork, B: np.ndarray, o: np.ndarray, max_len: int) -> ControlVector:
    """Sum ``o_s * prod(b along walk)`` over every walk of at most ``max_len`` edges.

    Explicit enumeration, exponential in ``max_len`` on dense graphs; meant as a
    test oracle on small instances.
    """
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    o = np.asarray(o, dtype=float)
    c = np.zeros(net.n)
    children = [np.flatnonzero(B[i]) for i in range(net.n)]

    def walk(node: int, weight: float, depth: int):
        c[node] += weight
        if depth == max_len:
            return
        for j in children[node]:
            walk(j, weight * B[node, j], depth + 1)

    for s in np.flatnonzero(o):
        walk(s, o[s], 0)
    return ControlVector(total=c, direct=o.copy())


def pairwise_control(net: OwnershipNetwork, source: int | str) -> np.ndarray:
    """Control of one node over every node: row ``source`` of ``(I - B_source)^{-1}``.

    ``B_source`` is ``A`` on the nodes reachable from ``source`` with the
    incoming edges of ``source`` removed.
    """
    i = net.index[source] if isinstance(source, str) else int(source)
    reach = reachable_from_sources(net, NodeSelection((i,))).array
    sub = net.dense[np.ix_(reach, reach)].copy()
    pos = int(np.searchsorted(reach, i))
    sub[:, pos] = 0.0
    e = np.zeros(reach.size)
    e[pos] = 1.0
    subnet = net.subnetwork(reach)
    row = propagate(subnet, sub, e).total
    out = np.zeros(net.n)
    out[reach] = row
    return out
