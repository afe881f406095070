"""k-means with seeded k-means++ and silhouette-driven choice of the cluster count."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import _kernels
from ._rng import derive_seed
from .events import SampleSet, canonical_order
from .knn_graph import SpatioTemporalPoints

BMode = Literal["nearest", "pooled"]
FORMAT_VERSION = 1

# rows of the pairwise-distance block kept in memory at once (times n doubles)
_BLOCK_BUDGET = 4_000_000


def _coords(points) -> np.ndarray:
    c = points.coords if isinstance(points, SpatioTemporalPoints) else points
    c = np.ascontiguousarray(c, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(c)):
        raise ValueError("point coordinates must be finite")
    return c


@dataclass(frozen=True)
class Clustering:
    f: int
    labels: np.ndarray = field(repr=False)
    centroids: np.ndarray = field(repr=False)
    inertia: float
    iterations: int
    seed: int
    inertia_trace: tuple[float, ...] = field(default=(), repr=False)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.f)


def _columns(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (np.ascontiguousarray(X[:, 0]), np.ascontiguousarray(X[:, 1]), np.ascontiguousarray(X[:, 2]))


def _kmeans_pp(cols, f: int, rng: np.random.Generator) -> np.ndarray:
    x0, x1, x2 = cols
    n = len(x0)
    C = np.empty((f, 3))
    j = int(rng.integers(n))
    d2 = np.empty(n)
    tmp = np.empty(n)
    for c in range(f):
        if c:
            cum = np.cumsum(d2)
            total = cum[-1]
            if total <= 0.0:
                raise ValueError("fewer distinct points than clusters")
            j = min(int(np.searchsorted(cum, rng.random() * total, side="right")), n - 1)
        C[c] = (x0[j], x1[j], x2[j])
        _kernels.sq_to_point(x0, x1, x2, x0[j], x1[j], x2[j], tmp if c else d2)
        if c:
            np.minimum(d2, tmp, out=d2)
    return C


def _lloyd(cols, f: int, seed: int, max_iter: int, tol: float) -> Clustering:
    n = len(cols[0])
    C = _kmeans_pp(cols, f, np.random.default_rng(seed))
    labels = np.zeros(n, dtype=np.int64)
    mind = np.empty(n)
    trace = np.empty(max_iter + 1)
    steps, converged = _kernels.lloyd(*cols, C, max_iter, tol, labels, mind, trace)
    trace = trace[: steps + int(converged)]
    return Clustering(
        f=f,
        labels=labels,
        centroids=C,
        inertia=float(trace[-1]),
        iterations=int(steps),
        seed=seed,
        inertia_trace=tuple(trace.tolist()),
    )


def n_distinct(points) -> int:
    return len(np.unique(_coords(points), axis=0))


def kmeans(points, f: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6) -> Clustering:
    """Lloyd's algorithm from a seeded k-means++ start.

    Points are processed in canonical (lexicographic) order so the result
    does not depend on input order; labels are returned in input order.
    Stops once no centroid moves more than ``tol`` or after ``max_iter``
    assignment steps.
    """
    X = _coords(points)
    n = len(X)
    if not 2 <= f <= n:
        raise ValueError(f"cluster count f must satisfy 2 <= f <= {n}, got {f}")
    if max_iter < 1 or tol < 0:
        raise ValueError("max_iter must be >= 1 and tol >= 0")
    order, _, cols = _sorted_columns(X)
    return _restore(_lloyd(cols, f, seed, max_iter, tol), order)


@dataclass(frozen=True)
class SilhouetteRecord:
    f: int
    per_point_s: np.ndarray = field(repr=False)
    mean_s: float
    b_mode: str = "nearest"


def _check_labels(labels: np.ndarray, f: int, n: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if f < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= f):
        raise ValueError(f"labels must lie in [0, {f})")
    if np.any(np.bincount(labels, minlength=f) == 0):
        raise ValueError("every cluster must be non-empty")
    return labels


def cluster_distance_sums(
    X: np.ndarray,
    label_sets: Sequence[tuple[np.ndarray, int]],
    threads: int = 1,
) -> list[np.ndarray]:
    """For each labelling, an ``(n, f)`` array of summed distances per cluster.

    All labellings share one pass over the pairwise distances, computed in
    row blocks and reduced against a stacked one-hot matrix.
    """
    n = len(X)
    widths = [f for _, f in label_sets]
    offsets = np.concatenate(([0], np.cumsum(widths)))
    onehot = np.zeros((n, int(offsets[-1])))
    rows = np.arange(n)
    for (labels, _), off in zip(label_sets, offsets[:-1]):
        onehot[rows, off + labels] = 1.0
    out = np.empty((n, int(offsets[-1])))
    step = max(64, _BLOCK_BUDGET // max(n, 1))
    cols = _columns(X)

    def work(lo: int) -> None:
        hi = min(lo + step, n)
        D = np.empty((hi - lo, n))
        _kernels.distance_rows(*cols, lo, hi, D)
        out[lo:hi] = D @ onehot

    starts = range(0, n, step)
    if threads > 1 and n > step:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for lo in starts:
            work(lo)
    return [out[:, offsets[i] : offsets[i + 1]] for i in range(len(label_sets))]


def _silhouette_from_sums(S: np.ndarray, labels: np.ndarray, f: int, b_mode: str) -> SilhouetteRecord:
    n = len(labels)
    counts = np.bincount(labels, minlength=f).astype(np.float64)
    rows = np.arange(n)
    own = S[rows, labels]
    cnt_own = counts[labels]
    singleton = cnt_own <= 1
    a = own / np.maximum(cnt_own - 1.0, 1.0)
    if b_mode == "nearest":
        means = S / counts
        means[rows, labels] = np.inf
        b = means.min(axis=1)
    elif b_mode == "pooled":
        b = (S.sum(axis=1) - own) / (n - cnt_own)
    else:
        raise ValueError(f"unknown b_mode {b_mode!r}")
    denom = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(denom > 0, (b - a) / denom, 0.0)
    s[singleton] = 0.0
    return SilhouetteRecord(f=f, per_point_s=s, mean_s=float(np.mean(s)), b_mode=b_mode)


def silhouette(points, labels, f: int, b_mode: BMode = "nearest") -> SilhouetteRecord:
    """Per-point silhouette ``(b - a) / max(a, b)`` under Euclidean distance.

    ``b_mode="nearest"`` takes ``b`` as the mean distance to the closest
    foreign cluster; ``"pooled"`` averages over every point outside the
    point's own cluster.  Singletons score 0, as does ``a = b = 0``.
    """
    X = _coords(points)
    labels = _check_labels(labels, f, len(X))
    (S,) = cluster_distance_sums(X, [(labels, f)])
    return _silhouette_from_sums(S, labels, f, b_mode)


@dataclass(frozen=True)
class ModelSelection:
    evaluated: dict[int, SilhouetteRecord] = field(repr=False)
    clusterings: dict[int, Clustering] = field(repr=False)
    chosen_f: int
    sc: float

    @property
    def best(self) -> Clustering:
        return self.clusterings[self.chosen_f]

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "evaluated": {str(f): rec.mean_s for f, rec in sorted(self.evaluated.items())},
            "chosen_f": self.chosen_f,
            "SC": self.sc,
        }


def _canonical(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((X[:, 2], X[:, 1], X[:, 0]))
    return order, np.ascontiguousarray(X[order])


def _sorted_columns(X: np.ndarray):
    order, Xs = _canonical(X)
    return order, Xs, _columns(Xs)


def _restore(run: Clustering, order: np.ndarray) -> Clustering:
    labels = np.empty_like(run.labels)
    labels[order] = run.labels
    return Clustering(
        f=run.f,
        labels=labels,
        centroids=run.centroids,
        inertia=run.inertia,
        iterations=run.iterations,
        seed=run.seed,
        inertia_trace=run.inertia_trace,
    )


def best_of_restarts(cols, f: int, seed: int, restarts: int, max_iter: int, tol: float) -> Clustering:
    """Lowest-inertia Lloyd run over derived seeds; ``cols`` canonically ordered."""
    best = None
    for r in range(restarts):
        run = _lloyd(cols, f, derive_seed(seed, f, r), max_iter, tol)
        if best is None or run.inertia < best.inertia:
            best = run
    return best


def select_f(
    points,
    f_min: int = 2,
    f_max: int = 20,
    seed: int = 0,
    restarts: int = 8,
    b_mode: BMode = "nearest",
    max_iter: int = 300,
    tol: float = 1e-6,
    threads: int = 1,
) -> ModelSelection:
    """Sweep ``f`` over ``[f_min, f_max]`` and keep the silhouette maximiser.

    Each ``f`` keeps the lowest-inertia run among ``restarts`` seeds derived
    from ``(seed, f, restart)``.  ``f_max`` is clamped to ``n - 1`` and to
    the number of distinct points.  Ties go to the smaller ``f``.
    """
    X = _coords(points)
    n = len(X)
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    upper = min(f_max, n - 1, n_distinct(X))
    if f_min < 2 or f_min > upper:
        raise ValueError(f"invalid f range [{f_min}, {f_max}] for {n} points")
    fs = list(range(f_min, upper + 1))
    order, Xs, cols = _sorted_columns(X)

    def fit(f: int) -> Clustering:
        return best_of_restarts(cols, f, seed, restarts, max_iter, tol)

    if threads > 1 and len(fs) > 1:
        # largest f first: the costliest fits start early and the pool stays balanced
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(fit, fs[::-1]))[::-1]
    else:
        runs = [fit(f) for f in fs]

    sums = cluster_distance_sums(Xs, [(r.labels, r.f) for r in runs], threads=threads)
    evaluated = {}
    for r, S in zip(runs, sums):
        rec = _silhouette_from_sums(S, r.labels, r.f, b_mode)
        s = np.empty_like(rec.per_point_s)
        s[order] = rec.per_point_s
        evaluated[r.f] = SilhouetteRecord(f=r.f, per_point_s=s, mean_s=rec.mean_s, b_mode=b_mode)
    runs = [_restore(r, order) for r in runs]
    chosen = max(fs, key=lambda f: (evaluated[f].mean_s, -f))
    return ModelSelection(
        evaluated=evaluated,
        clusterings={r.f: r for r in runs},
        chosen_f=chosen,
        sc=evaluated[chosen].mean_s,
    )


def clusters_from_labels(
    sample: SampleSet,
    denoised_indices,
    labels,
) -> list[tuple[int, np.ndarray]]:
    """Regroup sampled events by cluster id; negative ids (noise) are skipped.

    Returns ``(cluster_id, events)`` pairs sorted by id, events in time order.
    """
    idx = np.asarray(denoised_indices, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if idx.shape != labels.shape:
        raise ValueError(f"{len(labels)} labels for {len(idx)} indices")
    if len(idx) and (idx.min() < 0 or idx.max() >= len(sample)):
        raise ValueError("denoised index outside the sample")
    groups = []
    for cid in np.unique(labels[labels >= 0]):
        ev = sample.events[idx[labels == cid]]
        groups.append((int(cid), ev[canonical_order(ev)]))
    return groups
