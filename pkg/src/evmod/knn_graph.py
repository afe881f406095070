"""Spatiotemporal embedding, exact k-NN graph (union rule) and graph denoising."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .events import SampleSet

# relative slack for treating two k-d tree distances as a possible tie
_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class TimeScale:
    alpha: float  # pixels per microsecond

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be a positive finite number, got {self.alpha}")

    @classmethod
    def auto(cls, width: int, window_duration: int, fraction: float = 0.1) -> "TimeScale":
        """Time axis spans ``fraction`` of the sensor width over one window."""
        return cls(fraction * width / window_duration)


@dataclass(frozen=True)
class SpatioTemporalPoints:
    """Embedded points ``(u, v, w) = (x, y, alpha * (t - t_origin))``."""

    coords: np.ndarray = field(repr=False)  # (n, 3) float64
    source_index: np.ndarray = field(repr=False)  # (n,) positions in the SampleSet
    alpha: float = 1.0
    t_origin: int = 0

    def __len__(self) -> int:
        return len(self.coords)

    def subset(self, keep: np.ndarray) -> "SpatioTemporalPoints":
        keep = np.asarray(keep)
        return SpatioTemporalPoints(
            coords=_frozen(self.coords[keep].copy()),
            source_index=_frozen(self.source_index[keep].copy()),
            alpha=self.alpha,
            t_origin=self.t_origin,
        )


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def as_points(coords, source_index=None) -> SpatioTemporalPoints:
    """Wrap a raw ``(n, 3)`` array; handy for tests and baselines."""
    c = np.array(coords, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(c)):
        raise ValueError("point coordinates must be finite")
    idx = np.arange(len(c)) if source_index is None else np.asarray(source_index, dtype=np.int64)
    return SpatioTemporalPoints(coords=_frozen(c), source_index=_frozen(idx.copy()))


def embed(sample: SampleSet, scale: TimeScale) -> SpatioTemporalPoints:
    if len(sample) == 0:
        raise ValueError("cannot embed an empty sample")
    ev = sample.events
    coords = np.empty((len(ev), 3), dtype=np.float64)
    coords[:, 0] = ev["x"]
    coords[:, 1] = ev["y"]
    coords[:, 2] = scale.alpha * (ev["t"] - sample.t_start).astype(np.float64)
    return SpatioTemporalPoints(
        coords=_frozen(coords),
        source_index=_frozen(np.arange(len(ev), dtype=np.int64)),
        alpha=scale.alpha,
        t_origin=sample.t_start,
    )


def sq_dists(coords: np.ndarray, i: int, cand: np.ndarray) -> np.ndarray:
    """Squared distances from point ``i`` to ``cand``; the canonical metric."""
    d = coords[cand] - coords[i]
    return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]


def _exact_row(coords: np.ndarray, i: int, cand: np.ndarray, k: int) -> np.ndarray:
    cand = cand[cand != i]
    d2 = sq_dists(coords, i, cand)
    order = np.lexsort((cand, d2))
    return cand[order[:k]]


def knn_lists(coords: np.ndarray, k: int, workers: int = 1) -> np.ndarray:
    """Exact k nearest neighbours of every point, self excluded.

    Ordering is by squared Euclidean distance, ties to the smaller index.  The
    k-d tree answers the common case; rows whose k-th and (k+1)-th distances
    are (nearly) tied are re-resolved exactly from a radius query.
    """
    n = len(coords)
    tree = cKDTree(coords)
    m = min(k + 2, n)
    dist, idx = tree.query(coords, k=m, workers=workers)
    dist = dist.reshape(n, m)
    idx = idx.reshape(n, m)
    out = np.empty((n, k), dtype=np.int64)

    if m == k + 2:
        boundary = dist[:, k]
        nxt = dist[:, k + 1]
        ambiguous = nxt - boundary <= _TIE_RTOL * (1.0 + boundary)
    else:
        # k == n - 1: every other point is a neighbour
        ambiguous = np.zeros(n, dtype=bool)
        boundary = dist[:, -1]

    clean = ~ambiguous
    if clean.any():
        rows = idx[clean, : k + 1]
        selfpos = rows == np.flatnonzero(clean)[:, None]
        has_self = selfpos.any(axis=1)
        # self is always within the boundary for clean rows; guard anyway
        if not has_self.all():
            ambiguous[np.flatnonzero(clean)[~has_self]] = True
            clean = ~ambiguous
            rows = idx[clean, : k + 1]
            selfpos = rows == np.flatnonzero(clean)[:, None]
        out[clean] = rows[~selfpos].reshape(-1, k)

    amb = np.flatnonzero(ambiguous)
    if len(amb):
        radii = boundary[amb] * (1.0 + 4 * _TIE_RTOL) + 1e-12
        cands = tree.query_ball_point(coords[amb], radii)
        for row, cand in zip(amb, cands):
            out[row] = _exact_row(coords, row, np.asarray(cand, dtype=np.int64), k)
    return out


@dataclass(frozen=True)
class KnnGraph:
    nodes: SpatioTemporalPoints
    edges: np.ndarray = field(repr=False)  # (E, 2) int64, i < j, lexicographically sorted
    k: int
    neighbours: np.ndarray = field(repr=False)  # (n, k) directed k-NN lists

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def edge_lengths(self) -> np.ndarray:
        c = self.nodes.coords
        d = c[self.edges[:, 0]] - c[self.edges[:, 1]]
        return np.sqrt(np.einsum("ij,ij->i", d, d))

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.edges}


def _union_edges(neighbours: np.ndarray) -> np.ndarray:
    n, k = neighbours.shape
    src = np.repeat(np.arange(n, dtype=np.int64), k)
    dst = neighbours.ravel()
    # one int64 key per pair; a 1-D unique is far cheaper than unique(axis=0)
    keys = np.unique(np.minimum(src, dst) * n + np.maximum(src, dst))
    return np.stack([keys // n, keys % n], axis=1)


def build_knn_graph(points: SpatioTemporalPoints, k: int, workers: int = 1) -> KnnGraph:
    """Edge (i, j) iff j is among i's k nearest or i among j's."""
    n = len(points)
    if n < 2:
        raise ValueError(f"need at least 2 points for a k-NN graph, got {n}")
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < {n}, got {k}")
    neighbours = knn_lists(np.asarray(points.coords), k, workers)
    edges = _union_edges(neighbours)
    return KnnGraph(nodes=points, edges=_frozen(edges), k=k, neighbours=_frozen(neighbours))


def default_min_component(k: int) -> int:
    return max(3, math.ceil(k / 4))


def auto_edge_cut(points: SpatioTemporalPoints, factor: float = 0.5) -> float:
    """Edge-length cut scaled to the mean spacing of uniformly spread points.

    ``factor * (V / n) ** (1/3)`` with ``V`` the bounding volume (each side at
    least one unit).  Object events are much denser than this, isolated noise
    is not.
    """
    c = points.coords
    extent = np.maximum(c.max(axis=0) - c.min(axis=0), 1.0)
    return factor * float(np.prod(extent) / len(c)) ** (1.0 / 3.0)


@dataclass(frozen=True)
class DenoiseResult:
    points: SpatioTemporalPoints  # survivors, original source_index kept
    kept: np.ndarray = field(repr=False)  # node ids of survivors in the input graph
    removed: int
    n_components: int
    max_edge_length: float | None = None


def denoise(
    graph: KnnGraph,
    min_component_size: int,
    max_edge_length: float | None = None,
) -> DenoiseResult:
    """Drop connected components smaller than ``min_component_size`` nodes.

    With ``max_edge_length`` set, edges longer than it are ignored when
    finding components; otherwise every union-rule edge counts.
    """
    if min_component_size < 1:
        raise ValueError("min_component_size must be >= 1")
    n = graph.n_nodes
    edges = graph.edges
    if max_edge_length is not None:
        edges = edges[graph.edge_lengths() <= max_edge_length]
    adj = coo_matrix((np.ones(len(edges), dtype=np.int8), (edges[:, 0], edges[:, 1])), shape=(n, n))
    n_comp, comp = connected_components(adj, directed=False)
    sizes = np.bincount(comp, minlength=n_comp)
    kept = np.flatnonzero(sizes[comp] >= min_component_size)
    return DenoiseResult(
        points=graph.nodes.subset(kept),
        kept=_frozen(kept),
        removed=n - len(kept),
        n_components=int(n_comp),
        max_edge_length=max_edge_length,
    )


def induced_subgraph(graph: KnnGraph, keep: np.ndarray) -> KnnGraph:
    """Restrict the graph to ``keep`` nodes without recomputing neighbours."""
    keep = np.asarray(keep, dtype=np.int64)
    remap = np.full(graph.n_nodes, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    e = remap[graph.edges]
    e = e[(e >= 0).all(axis=1)]
    nb = remap[graph.neighbours[keep]]
    return KnnGraph(nodes=graph.nodes.subset(keep), edges=_frozen(e), k=graph.k, neighbours=_frozen(nb))


def write_graph(graph: KnnGraph, edge_path, nodes_path) -> None:
    """Debug dump: ``i j`` edge list plus a ``node,u,v,w,source_index`` CSV."""
    with open(edge_path, "w", encoding="utf-8") as fh:
        for a, b in graph.edges.tolist():
            fh.write(f"{a} {b}\n")
    with open(nodes_path, "w", encoding="utf-8") as fh:
        fh.write("node,u,v,w,source_index\n")
        for i, (c, s) in enumerate(zip(graph.nodes.coords.tolist(), graph.nodes.source_index.tolist())):
            fh.write(f"{i},{c[0]!r},{c[1]!r},{c[2]!r},{s}\n")
