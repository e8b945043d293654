"""Compact adjacency helpers: CSR construction, gathers, multi-source BFS.

All routines are pure numpy and deterministic: frontiers are expanded in
sorted node order and edge arrays are kept in a canonical sort, so repeated
runs produce identical arrays regardless of input row order.
"""

from __future__ import annotations

import numpy as np


def canonical_edge_order(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Permutation sorting edges by (src, dst)."""
    return np.lexsort((dst, src))


def build_indptr(endpoints: np.ndarray, n: int) -> np.ndarray:
    """CSR row pointer for edges grouped by ``endpoints`` (must be sorted)."""
    counts = np.bincount(endpoints, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr


def neighbor_positions(indptr: np.ndarray, frontier: np.ndarray) -> np.ndarray:
    """Positions (into the underlying edge arrays) of all edges whose row
    endpoint lies in ``frontier``. Vectorised equivalent of concatenating
    ``range(indptr[f], indptr[f+1])`` for every f."""
    starts = indptr[frontier]
    counts = indptr[frontier + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    prefix = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return np.arange(total, dtype=np.int64) + np.repeat(starts - prefix, counts)


def multi_source_bfs(
    indptr: np.ndarray,
    neighbors: np.ndarray,
    sources: np.ndarray,
    n: int,
) -> np.ndarray:
    """Hop distance from the nearest source, -1 where unreachable.

    ``neighbors`` holds the neighbor of each edge position, grouped per node
    by ``indptr``. Sources themselves get distance 0.
    """
    dist = np.full(n, -1, dtype=np.int32)
    frontier = np.unique(np.asarray(sources, dtype=np.int64))
    if frontier.size == 0:
        return dist
    dist[frontier] = 0
    d = 0
    while frontier.size:
        d += 1
        pos = neighbor_positions(indptr, frontier)
        if pos.size == 0:
            break
        nb = neighbors[pos]
        nb = nb[dist[nb] < 0]
        if nb.size == 0:
            break
        frontier = np.unique(nb)
        dist[frontier] = d
    return dist


def freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr
