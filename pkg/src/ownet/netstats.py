"""Structural statistics: degree distributions, power-law fits, clustering.

Degree histograms use geometric (logarithmic) binning. Exponents are fitted
by exact discrete maximum likelihood through the Hurwitz zeta function,
with an optional Kolmogorov-Smirnov scan for the lower cutoff; a log-log
regression slope on the binned densities is available separately for
comparison with straight-line fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import zeta

from ._csr import build_indptr
from .errors import FitError

_GAMMA_LO = 1.000001
_GAMMA_HI = 25.0
_MIN_TAIL = 50
_MAX_XMIN_CANDIDATES = 200

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


@dataclass(frozen=True)
class DegreeHistogram:
    direction: str
    raw: dict[int, int]
    bin_edges: np.ndarray
    counts: np.ndarray
    densities: np.ndarray
    n_binned: int

    def rows(self) -> list[tuple[float, float, int, float]]:
        return [
            (float(self.bin_edges[i]), float(self.bin_edges[i + 1]), int(self.counts[i]), float(self.densities[i]))
            for i in range(self.counts.shape[0])
        ]


def _degrees_for(g, direction: str) -> np.ndarray:
    if direction == "in":
        return g.in_degrees()
    if direction == "out":
        return g.out_degrees()
    if direction == "total":
        return g.in_degrees() + g.out_degrees()
    raise ValueError(f"direction must be in/out/total, got {direction!r}")


def degree_histogram(g, direction: str = "in", bin_ratio: float = 2.0) -> DegreeHistogram:
    """Raw and log-binned degree distribution.

    Zero-degree nodes stay in the raw histogram but are excluded from the
    geometric bins. Densities are normalised so that sum(density * width)
    equals 1 over the binned nodes.
    """
    if not bin_ratio > 1.0:
        raise ValueError(f"bin_ratio must exceed 1, got {bin_ratio}")
    deg = _degrees_for(g, direction)
    raw_counts = np.bincount(deg) if deg.size else np.zeros(0, dtype=np.int64)
    raw = {int(k): int(c) for k, c in enumerate(raw_counts) if c}

    positive = deg[deg > 0]
    if positive.size == 0:
        return DegreeHistogram(direction, raw, np.zeros(0), np.zeros(0, np.int64), np.zeros(0), 0)

    max_deg = int(positive.max())
    edges = [1.0]
    while edges[-1] <= max_deg:
        edges.append(edges[-1] * bin_ratio)
    edges_arr = np.asarray(edges)
    counts, _ = np.histogram(positive, bins=edges_arr)
    widths = np.diff(edges_arr)
    densities = counts / (positive.size * widths)
    return DegreeHistogram(direction, raw, edges_arr, counts.astype(np.int64), densities, int(positive.size))


@dataclass(frozen=True)
class PowerLawFit:
    gamma: float
    x_min: int
    n_tail: int
    loglik: float
    ks: float | None = None


def _nll(gamma: float, n: int, sum_log: float, x_min: int) -> float:
    return n * np.log(zeta(gamma, x_min)) + gamma * sum_log


def _mle_gamma(tail: np.ndarray, x_min: int) -> tuple[float, float]:
    n = tail.size
    sum_log = float(np.log(tail).sum())
    res = minimize_scalar(
        _nll,
        bounds=(_GAMMA_LO, _GAMMA_HI),
        args=(n, sum_log, x_min),
        method="bounded",
        options={"xatol": 1e-10},
    )
    gamma = float(res.x)
    return gamma, -_nll(gamma, n, sum_log, x_min)


def _ks_statistic(tail: np.ndarray, gamma: float, x_min: int) -> float:
    values, counts = np.unique(tail, return_counts=True)
    ecdf = np.cumsum(counts) / tail.size
    mcdf = 1.0 - zeta(gamma, values + 1) / zeta(gamma, x_min)
    return float(np.abs(ecdf - mcdf).max())


def fit_power_law(samples, x_min: int | None = 1) -> PowerLawFit:
    """Discrete power-law exponent by exact maximum likelihood.

    ``x_min`` fixes the lower cutoff; pass ``None`` to select it by
    minimising the Kolmogorov-Smirnov distance over candidate cutoffs.
    Requires at least 50 tail samples and a non-degenerate tail.
    """
    data = np.asarray(samples)
    data = data[data > 0].astype(np.int64)

    if x_min is not None:
        if x_min < 1:
            raise FitError(f"x_min must be >= 1, got {x_min}")
        tail = data[data >= x_min]
        if tail.size < _MIN_TAIL:
            raise FitError(f"need >= {_MIN_TAIL} samples >= x_min, got {tail.size}")
        if int(tail.min()) == int(tail.max()):
            raise FitError("all tail samples equal: degenerate likelihood")
        gamma, loglik = _mle_gamma(tail, int(x_min))
        return PowerLawFit(gamma, int(x_min), int(tail.size), loglik, _ks_statistic(tail, gamma, int(x_min)))

    candidates = np.unique(data)
    candidates = candidates[: _MAX_XMIN_CANDIDATES]
    best: PowerLawFit | None = None
    for cand in candidates:
        tail = data[data >= cand]
        if tail.size < _MIN_TAIL:
            break
        if int(tail.min()) == int(tail.max()):
            continue
        gamma, loglik = _mle_gamma(tail, int(cand))
        ks = _ks_statistic(tail, gamma, int(cand))
        if best is None or ks < best.ks:
            best = PowerLawFit(gamma, int(cand), int(tail.size), loglik, ks)
    if best is None:
        raise FitError("no viable x_min candidate (too few or degenerate samples)")
    return best


def binned_fit_slope(samples, bin_ratio: float = 2.0) -> float:
    """Least-squares slope of log density vs log degree over geometric bins.

    The straight-line analogue of the MLE exponent (reported alongside it;
    the slope approximates -gamma).
    """
    data = np.asarray(samples)
    data = data[data > 0]
    if data.size < 2:
        raise FitError("need at least two positive samples")
    max_v = int(data.max())
    edges = [1.0]
    while edges[-1] <= max_v:
        edges.append(edges[-1] * bin_ratio)
    edges_arr = np.asarray(edges)
    counts, _ = np.histogram(data, bins=edges_arr)
    widths = np.diff(edges_arr)
    centers = np.sqrt(edges_arr[:-1] * edges_arr[1:])
    mask = counts > 0
    if mask.sum() < 2:
        raise FitError("fewer than two occupied bins")
    x = np.log10(centers[mask])
    y = np.log10(counts[mask] / (data.size * widths[mask]))
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


# -- clustering and degree correlations -----------------------------------

def undirected_simple_csr(g) -> tuple[np.ndarray, np.ndarray]:
    """CSR of the undirected simple graph (reciprocal/parallel collapsed)."""
    n = g.n_nodes
    u = np.concatenate([g.src, g.dst]).astype(np.int64)
    v = np.concatenate([g.dst, g.src]).astype(np.int64)
    key = np.unique(u * n + v)
    uu = (key // n).astype(np.int64)
    vv = (key % n).astype(np.int64)
    return build_indptr(uu, n), vv


def _triangle_kernel_py(indptr, nbrs, tri):
    n = indptr.shape[0] - 1
    for u in range(n):
        for pos in range(indptr[u], indptr[u + 1]):
            v = nbrs[pos]
            if v <= u:
                continue
            a, a_end = int(indptr[u]), int(indptr[u + 1])
            b, b_end = int(indptr[v]), int(indptr[v + 1])
            # advance past elements <= v: triangles counted once with u < v < w
            lo, hi = a, a_end
            while lo < hi:
                mid = (lo + hi) // 2
                if nbrs[mid] <= v:
                    lo = mid + 1
                else:
                    hi = mid
            a = lo
            lo, hi = b, b_end
            while lo < hi:
                mid = (lo + hi) // 2
                if nbrs[mid] <= v:
                    lo = mid + 1
                else:
                    hi = mid
            b = lo
            while a < a_end and b < b_end:
                x = nbrs[a]
                y = nbrs[b]
                if x == y:
                    tri[u] += 1
                    tri[v] += 1
                    tri[x] += 1
                    a += 1
                    b += 1
                elif x < y:
                    a += 1
                else:
                    b += 1


if _HAVE_NUMBA:
    _triangle_kernel = _njit(cache=True)(_triangle_kernel_py)
else:  # pragma: no cover
    _triangle_kernel = _triangle_kernel_py


def triangle_counts(indptr: np.ndarray, nbrs: np.ndarray) -> np.ndarray:
    """Per-node triangle counts on a sorted undirected CSR.

    Nodes are visited by ascending degree internally so hub adjacency lists
    are merged only against shorter lists.
    """
    n = indptr.shape[0] - 1
    deg = np.diff(indptr)
    order = np.argsort(deg, kind="stable").astype(np.int64)
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)

    # rebuild the CSR in rank space with sorted rows
    new_src = rank[np.repeat(np.arange(n), deg)]
    new_dst = rank[nbrs]
    perm = np.lexsort((new_dst, new_src))
    r_indptr = build_indptr(new_src[perm], n)
    r_nbrs = new_dst[perm]

    tri_ranked = np.zeros(n, dtype=np.int64)
    _triangle_kernel(r_indptr, r_nbrs, tri_ranked)
    tri = np.empty(n, dtype=np.int64)
    tri[order] = tri_ranked
    return tri


def local_clustering(g) -> np.ndarray:
    """Per-node clustering on the undirected simple graph (0 for degree < 2)."""
    indptr, nbrs = undirected_simple_csr(g)
    deg = np.diff(indptr)
    tri = triangle_counts(indptr, nbrs)
    c = np.zeros(g.n_nodes, dtype=np.float64)
    mask = deg >= 2
    c[mask] = 2.0 * tri[mask] / (deg[mask] * (deg[mask] - 1.0))
    return c


@dataclass(frozen=True)
class StatCurve:
    """Per-degree averages with sample counts (clustering or k_nn curves)."""

    degrees: np.ndarray
    values: np.ndarray
    counts: np.ndarray

    def as_dict(self) -> dict[int, float]:
        return {int(k): float(v) for k, v in zip(self.degrees, self.values)}


def _group_by_degree(deg: np.ndarray, values: np.ndarray, keep: np.ndarray) -> StatCurve:
    deg = deg[keep]
    values = values[keep]
    if deg.size == 0:
        return StatCurve(np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64))
    cnt = np.bincount(deg)
    sums = np.bincount(deg, weights=values)
    ks = np.flatnonzero(cnt)
    return StatCurve(ks.astype(np.int64), sums[ks] / cnt[ks], cnt[ks].astype(np.int64))


def clustering_by_degree(g) -> StatCurve:
    """Average clustering per (undirected simple) total degree."""
    indptr, _ = undirected_simple_csr(g)
    deg = np.diff(indptr)
    c = local_clustering(g)
    return _group_by_degree(deg, c, np.ones(deg.shape[0], dtype=bool))


def knn_by_degree(g) -> StatCurve:
    """Average nearest-neighbor degree per (undirected simple) total degree."""
    indptr, nbrs = undirected_simple_csr(g)
    deg = np.diff(indptr)
    n = deg.shape[0]
    row = np.repeat(np.arange(n), deg)
    sums = np.bincount(row, weights=deg[nbrs].astype(np.float64), minlength=n)
    knn = np.zeros(n, dtype=np.float64)
    pos = deg > 0
    knn[pos] = sums[pos] / deg[pos]
    return _group_by_degree(deg, knn, pos)
