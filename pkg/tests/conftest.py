import math

import numpy as np
import pytest

from qnetctl.fidelity import FidelityParams
from qnetctl.netsim import Commodity, Edge, Network, Node, Topology


def make_network(nodes, edges, commodities, max_path_hops=6, **params):
    """Build a network from compact tuples.

    ``nodes``: ids or ``(id, role, memory)``; ``edges``: ``(u, v, p_gen[, F0])``;
    ``commodities``: ``(id, src, dst, rate)``.
    """
    node_objs = []
    for n in nodes:
        node_objs.append(Node(n, "client") if isinstance(n, str) else Node(*n))
    edge_objs = [Edge(*e) for e in edges]
    topo = Topology(tuple(node_objs), tuple(edge_objs))
    return Network(topo, [Commodity(*c) for c in commodities], FidelityParams(**params), max_path_hops)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def line2():
    return make_network(
        ["A", ("R", "switch", None), "B"],
        [("A", "R", 0.5), ("R", "B", 0.5)],
        [(1, "A", "B", 0.2)],
        cutoff_age=1,
    )


@pytest.fixture
def triangle_contention():
    # Commodities 1 (A-B) and 2 (A-C) both need the single A-S link.
    return make_network(
        ["A", ("S", "switch", None), "B", "C"],
        [("A", "S", 1.0), ("S", "B", 1.0), ("S", "C", 1.0)],
        [(1, "A", "B", 0.1), (2, "A", "C", 0.1)],
        cutoff_age=1,
    )


INF = math.inf
