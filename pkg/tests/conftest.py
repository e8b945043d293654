import numpy as np
import pytest

from ownet.graph import NodeRecord, OwnershipEdge, build_graph, substantial_view
from ownet.mnc import build_subtree
from ownet.synth import template_graph, toy_m1_template


def make_graph(n, edges, jurisdictions=None, pct=50.0):
    """Tiny graph builder: ids n0..n{n-1}, edges as (src, dst[, pct]) index pairs."""
    jurisdictions = jurisdictions or {}
    nodes = [NodeRecord(f"n{i}", jurisdictions.get(i, "US")) for i in range(n)]
    rows = []
    for e in edges:
        p = e[2] if len(e) > 2 else pct
        rows.append(OwnershipEdge(f"n{e[0]}", f"n{e[1]}", p))
    return build_graph(nodes, rows)


def random_digraph(rng, n, p=0.08):
    mask = rng.random((n, n)) < p
    np.fill_diagonal(mask, False)
    edges = [(i, j) for i in range(n) for j in range(n) if mask[i, j]]
    return make_graph(n, edges), mask


@pytest.fixture(scope="session")
def m1_template():
    return toy_m1_template()


@pytest.fixture(scope="session")
def m1_graph(m1_template):
    return template_graph(m1_template)


@pytest.fixture(scope="session")
def m1_view(m1_graph):
    return substantial_view(m1_graph, 10.0)


@pytest.fixture()
def m1_subtree(m1_graph, m1_view):
    return build_subtree(m1_view, m1_graph.index_of("M1:HQ"))


def m1_index(graph, local):
    return graph.index_of(f"M1:{local}")
