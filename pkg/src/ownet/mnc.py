"""Per-corporation subtrees over substantial ownership links.

An affiliate of a headquarters is any node with a directed substantial
path to it (capital-flow orientation), found by reverse BFS from the HQ.
Layer numbers are the BFS hop counts, so direct affiliates sit in layer 1
and cross-shareholding cycles get the minimum consistent layer. Degrees
for the centrality sums are counted inside the subgraph induced by the
affiliates plus the HQ, with the sums running over affiliates only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._csr import multi_source_bfs, neighbor_positions
from .errors import GraphError, LoadError
from .graph import SubstantialView

HQ_HEADER = ["hq_node_id", "mnc_name"]


def load_hq_list(path) -> list[tuple[str, str]]:
    """Read ``hq_node_id,mnc_name`` rows; duplicate MNC names rejected."""
    path = Path(path)
    rows: list[tuple[str, str]] = []
    seen: set[str] = set()
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise LoadError(str(exc), path) from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HQ_HEADER:
            raise LoadError(f"expected header {','.join(HQ_HEADER)}", path, 1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise LoadError("expected 2 fields", path, line)
            hq_id, name = row[0].strip(), row[1].strip()
            if not hq_id or not name:
                raise LoadError("empty field", path, line)
            if name in seen:
                raise LoadError(f"duplicate mnc_name {name!r}", path, line)
            seen.add(name)
            rows.append((hq_id, name))
    return rows


@dataclass
class MncSubtree:
    view: SubstantialView = field(repr=False)
    hq: int
    affiliates: np.ndarray
    layers: np.ndarray
    k_in: np.ndarray | None = None
    k_out: np.ndarray | None = None
    sum_k_in: int | None = None
    sum_k_total: int | None = None
    sum_k_product: int | None = None

    @property
    def n_affiliates(self) -> int:
        return int(self.affiliates.shape[0])

    def members(self) -> np.ndarray:
        """Affiliates plus the HQ, sorted by node index."""
        return np.sort(np.append(self.affiliates, self.hq))

    def position(self, node: int) -> int:
        """Index of ``node`` inside the sorted affiliate array."""
        pos = int(np.searchsorted(self.affiliates, node))
        if pos >= self.n_affiliates or self.affiliates[pos] != node:
            raise GraphError(f"node {node} is not an affiliate of this subtree")
        return pos

    def layer_of(self, node: int) -> int:
        return int(self.layers[self.position(node)])


def extract_mnc(view: SubstantialView, hq) -> MncSubtree:
    """All nodes with a directed substantial path to ``hq``, with layers.

    ``hq`` may be a node id string or a dense index. Cycle-safe: the BFS
    visits every node at most once.
    """
    hq_idx = view.graph.index_of(hq) if isinstance(hq, str) else int(hq)
    if not 0 <= hq_idx < view.n_nodes:
        raise GraphError(f"node index {hq_idx} out of range")
    dist = multi_source_bfs(view.in_indptr, view.in_sources, np.array([hq_idx]), view.n_nodes)
    affiliates = np.flatnonzero(dist > 0).astype(np.int64)
    return MncSubtree(
        view=view,
        hq=hq_idx,
        affiliates=affiliates,
        layers=dist[affiliates].astype(np.int32),
    )


def assign_layers(subtree: MncSubtree) -> dict[int, int]:
    """Affiliate -> shortest substantial hop count to the HQ."""
    return {int(a): int(l) for a, l in zip(subtree.affiliates, subtree.layers)}


def _member_mask_lookup(members: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    pos = np.searchsorted(members, nodes)
    pos_clipped = np.minimum(pos, members.shape[0] - 1)
    return (pos < members.shape[0]) & (members[pos_clipped] == nodes)


def mnc_degrees(subtree: MncSubtree, global_degrees: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """In/out degrees of each affiliate, plus the three centrality sums.

    By default degrees are counted inside the subgraph induced by the
    affiliates plus the HQ (the sums run over members, so links leaving the
    corporation are ignored). ``global_degrees`` switches to each
    affiliate's degree over the whole substantial view instead; the sums
    still run over the subtree's affiliates. Returns (k_in, k_out) aligned
    with ``subtree.affiliates``.
    """
    view = subtree.view
    if global_degrees:
        k_in = view.in_degrees()[subtree.affiliates].astype(np.int64)
        k_out = view.out_degrees()[subtree.affiliates].astype(np.int64)
    else:
        members = subtree.members()
        edge_pos = neighbor_positions(view.out_indptr, members)
        srcs = view.src[edge_pos]
        dsts = view.dst[edge_pos]
        internal = _member_mask_lookup(members, dsts)
        srcs, dsts = srcs[internal], dsts[internal]

        k = members.shape[0]
        k_out_m = np.bincount(np.searchsorted(members, srcs), minlength=k)
        k_in_m = np.bincount(np.searchsorted(members, dsts), minlength=k)

        aff_sel = members != subtree.hq
        # members() sorts, so the non-HQ entries are exactly the affiliates in order
        assert np.array_equal(members[aff_sel], subtree.affiliates)
        k_in = k_in_m[aff_sel].astype(np.int64)
        k_out = k_out_m[aff_sel].astype(np.int64)

    subtree.k_in = k_in
    subtree.k_out = k_out
    subtree.sum_k_in = int(k_in.sum())
    subtree.sum_k_total = int((k_in + k_out).sum())
    subtree.sum_k_product = int((k_in * k_out).sum())
    return k_in, k_out


def build_subtree(view: SubstantialView, hq, global_degrees: bool = False) -> MncSubtree:
    """Extract, layer, and degree a subtree in one call."""
    subtree = extract_mnc(view, hq)
    mnc_degrees(subtree, global_degrees=global_degrees)
    return subtree
