"""Connectivity analysis: weak/strong components, bow-tie regions, distances.

Component labelings are deterministic: component ids are assigned in order
of each component's smallest contained node index, and ties for "largest"
resolve to the smallest id. The strongly-connected-component pass is
delegated to scipy's iterative C implementation, which is linear-time and
recursion-safe on multi-million-node graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _scipy_components

from ._csr import multi_source_bfs
from .errors import GraphError

GSCC, IN, OUT, TE, REST = 0, 1, 2, 3, 4
REGION_NAMES = {GSCC: "GSCC", IN: "IN", OUT: "OUT", TE: "TE", REST: "REST"}


@dataclass(frozen=True)
class ComponentLabeling:
    """Node -> component id, with ids ordered by smallest member index."""

    labels: np.ndarray
    sizes: np.ndarray
    largest: int

    @property
    def n_components(self) -> int:
        return int(self.sizes.shape[0])


def _relabel_by_first_member(raw: np.ndarray) -> ComponentLabeling:
    if raw.size == 0:
        return ComponentLabeling(raw.astype(np.int32), np.zeros(0, dtype=np.int64), -1)
    uniq, first = np.unique(raw, return_index=True)
    rank = np.empty(uniq.shape[0], dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(uniq.shape[0])
    labels = rank[np.searchsorted(uniq, raw)].astype(np.int32)
    sizes = np.bincount(labels).astype(np.int64)
    # np.argmax picks the first maximum, i.e. the smallest component id
    return ComponentLabeling(labels, sizes, int(np.argmax(sizes)))


def _adjacency_matrix(g) -> csr_matrix:
    n = g.n_nodes
    data = np.ones(g.n_edges, dtype=np.int8)
    return csr_matrix((data, (g.src, g.dst)), shape=(n, n))


def weak_components(g) -> ComponentLabeling:
    """Components of the undirected view of the graph."""
    if g.n_nodes == 0:
        return _relabel_by_first_member(np.zeros(0, dtype=np.int32))
    _, raw = _scipy_components(_adjacency_matrix(g), directed=True, connection="weak")
    return _relabel_by_first_member(raw)


def strong_components(g) -> ComponentLabeling:
    """Strongly connected components (iterative, no recursion limit)."""
    if g.n_nodes == 0:
        return _relabel_by_first_member(np.zeros(0, dtype=np.int32))
    _, raw = _scipy_components(_adjacency_matrix(g), directed=True, connection="strong")
    return _relabel_by_first_member(raw)


@dataclass(frozen=True)
class BowTie:
    """Partition of the giant weakly connected component.

    ``region`` assigns every node one of GSCC / IN / OUT / TE, or REST for
    nodes outside the GWCC. Shortest-hop distances to/from the GSCC are
    kept for the distance tables.
    """

    region: np.ndarray
    gwcc_size: int
    sizes: dict[int, int]
    dist_to_gscc: np.ndarray = field(repr=False)
    dist_from_gscc: np.ndarray = field(repr=False)
    graph: object = field(repr=False, default=None)

    def size(self, region: int) -> int:
        return self.sizes.get(region, 0)

    def ratio_percent(self, region: int) -> float:
        return 100.0 * self.size(region) / self.gwcc_size

    def summary_rows(self) -> list[tuple[str, int, str]]:
        """(region, count, ratio) rows with ratios rounded half-up to 3 dp."""
        rows = [
            (REGION_NAMES[r], self.size(r), ratio_percent_3dp(self.size(r), self.gwcc_size))
            for r in (GSCC, IN, OUT, TE)
        ]
        rows.append(("Total", self.gwcc_size, "100"))
        return rows


def ratio_percent_3dp(part: int, total: int) -> str:
    """Percentage of ``part`` in ``total``, rounded half-up to 3 decimals."""
    if total == 0:
        return "0.000"
    pct = Decimal(part) * 100 / Decimal(total)
    return str(pct.quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


def bowtie_decompose(g) -> BowTie:
    """Bow-tie regions of the giant weakly connected component.

    GSCC is the largest strongly connected component inside the GWCC; IN
    holds the GWCC nodes with a directed path into the GSCC, OUT the nodes
    reachable from it, TE the remainder of the GWCC.
    """
    if g.n_nodes == 0:
        raise GraphError("bow-tie decomposition of an empty graph")

    weak = weak_components(g)
    gwcc_mask = weak.labels == weak.largest

    strong = strong_components(g)
    scc_sizes_in_gwcc = np.bincount(
        strong.labels[gwcc_mask], minlength=strong.n_components
    )
    gscc_label = int(np.argmax(scc_sizes_in_gwcc))
    gscc_mask = strong.labels == gscc_label
    gscc_nodes = np.flatnonzero(gscc_mask)

    # nodes that reach the GSCC: walk ownership edges backwards
    dist_to = multi_source_bfs(g.in_indptr, g.in_sources, gscc_nodes, g.n_nodes)
    # nodes the GSCC reaches: walk forwards
    dist_from = multi_source_bfs(g.out_indptr, g.dst, gscc_nodes, g.n_nodes)

    region = np.full(g.n_nodes, REST, dtype=np.int8)
    region[gwcc_mask] = TE
    region[(dist_to > 0) & gwcc_mask] = IN
    region[(dist_from > 0) & gwcc_mask] = OUT
    region[gscc_mask] = GSCC

    sizes = {
        r: int(np.count_nonzero(region == r)) for r in (GSCC, IN, OUT, TE)
    }
    return BowTie(
        region=region,
        gwcc_size=int(gwcc_mask.sum()),
        sizes=sizes,
        dist_to_gscc=dist_to,
        dist_from_gscc=dist_from,
        graph=g,
    )


def component_size_histogram(labeling: ComponentLabeling, exclude_largest: bool = False) -> dict[int, int]:
    """Mapping component size -> number of components of that size."""
    sizes = labeling.sizes.copy()
    if exclude_largest and sizes.size:
        sizes = np.delete(sizes, labeling.largest)
    hist: dict[int, int] = {}
    for s in sizes:
        hist[int(s)] = hist.get(int(s), 0) + 1
    return dict(sorted(hist.items()))


@dataclass(frozen=True)
class DistanceHistogram:
    """Shortest-hop distribution between a bow-tie region and the GSCC."""

    direction: str
    counts: dict[int, int]
    total: int
    unreachable: int = 0

    def ratio(self, distance: int) -> float:
        return self.counts.get(distance, 0) / self.total if self.total else 0.0

    def rows(self) -> list[tuple[int, int, float]]:
        return [(d, c, c / self.total) for d, c in sorted(self.counts.items())]


def distance_distribution(bowtie: BowTie, direction: str, reverse_orientation: bool = False) -> DistanceHistogram:
    """Distances IN -> GSCC (``direction="in"``) or GSCC -> OUT (``"out"``).

    Distances are unweighted hops in stored capital-flow orientation;
    ``reverse_orientation`` measures along flipped edges instead.
    """
    if direction not in ("in", "out"):
        raise ValueError(f"direction must be 'in' or 'out', got {direction!r}")
    g = bowtie.graph
    want = IN if direction == "in" else OUT

    if not reverse_orientation:
        dist = bowtie.dist_to_gscc if direction == "in" else bowtie.dist_from_gscc
    else:
        gscc_nodes = np.flatnonzero(bowtie.region == GSCC)
        if direction == "in":
            dist = multi_source_bfs(g.out_indptr, g.dst, gscc_nodes, g.n_nodes)
        else:
            dist = multi_source_bfs(g.in_indptr, g.in_sources, gscc_nodes, g.n_nodes)

    member = bowtie.region == want
    values = dist[member]
    reached = values[values > 0]
    counts: dict[int, int] = {}
    for d in reached:
        counts[int(d)] = counts.get(int(d), 0) + 1
    return DistanceHistogram(
        direction=direction,
        counts=dict(sorted(counts.items())),
        total=int(member.sum()),
        unreachable=int(member.sum() - reached.size),
    )
