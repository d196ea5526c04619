import numpy as np
import pytest

from netcontrol import NodeSelection, OwnershipNetwork
from netcontrol.synthgen import StarSpec, generate_extended_star

# Star used wherever a "star fixture" is needed: depth 2, branching 3, weights from seed 1.
STAR_SPEC = StarSpec(depth=2, branching=3, seed=1)

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def chain():
    return OwnershipNetwork.from_edges(["1", "2"], [4.0, 2.0], [("1", "2", 0.5)])


@pytest.fixture
def chain3():
    return OwnershipNetwork.from_edges(
        ["1", "2", "3"], [1.0, 1.0, 1.0], [("1", "2", 0.5), ("2", "3", 0.4)]
    )


@pytest.fixture
def two_cycle():
    return OwnershipNetwork.from_edges(["1", "2"], [1.0, 1.0], [("1", "2", 0.5), ("2", "1", 0.5)])


@pytest.fixture
def star():
    return generate_extended_star(STAR_SPEC)


def sel(*idx):
    return NodeSelection(tuple(idx))


def random_graph(rng, n, p, acyclic=False, max_column=0.9):
    """Independent small-graph builder used by property tests."""
    edges = []
    order = rng.permutation(n)
    rank = np.argsort(order)
    for i in range(n):
        for j in range(n):
            if i != j and (not acyclic or rank[i] < rank[j]) and rng.random() < p:
                edges.append([i, j, rng.uniform(0.01, 1.0)])
    col = np.zeros(n)
    for _, j, w in edges:
        col[j] += w
    for e in edges:
        if col[e[1]] > max_column:
            e[2] *= max_column / col[e[1]]
    return OwnershipNetwork.from_edges(range(n), rng.uniform(0, 10, n), [tuple(e) for e in edges])
