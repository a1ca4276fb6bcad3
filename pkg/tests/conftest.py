import random

import pytest

from obge.graph import Graph


def random_graph(rng: random.Random, n: int, p: float, weighted: bool = False, directed: bool = True) -> Graph:
    g = Graph(n, directed=directed)
    for u in range(n):
        for v in range(u + 1 if not directed else 0, n):
            if u == v:
                continue
            if rng.random() < p:
                w = rng.randint(1, 9) if weighted else 1
                g.add_edge(u, v, w)
    return g


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


@pytest.fixture
def four_vertex_directed():
    """0->1, 1->2, 2->3, 0->2: the worked instance used across examples."""
    g = Graph(4, directed=True)
    for u, v in [(0, 1), (1, 2), (2, 3), (0, 2)]:
        g.add_edge(u, v)
    return g


@pytest.fixture
def four_vertex_undirected():
    g = Graph(4, directed=False)
    for u, v in [(0, 1), (1, 2), (2, 3), (0, 2)]:
        g.add_edge(u, v)
    return g
