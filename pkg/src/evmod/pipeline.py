"""Per-window detection pipeline.

sample -> embed -> k-NN graph -> denoise -> cluster (k-means sweep or a
baseline) -> one box per sufficiently large cluster.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import baselines
from ._rng import derive_seed
from .clustering import ModelSelection, clusters_from_labels, n_distinct, select_f, silhouette
from .evaluation import Detection, DetectionSet, cluster_bbox
from .events import EventWindow, SampleSet, uniform_sample
from .knn_graph import (
    SpatioTemporalPoints,
    TimeScale,
    auto_edge_cut,
    build_knn_graph,
    default_min_component,
    denoise,
    embed,
)

log = logging.getLogger(__name__)

METHODS = ("kmeans", "dbscan", "meanshift", "gmm")
THREADS_ENV = "EVMOD_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


@dataclass(frozen=True)
class DetectConfig:
    method: str = "kmeans"
    sample_size: int = 2000
    k: int = 45
    alpha: float | str = "auto"
    f_min: int = 2
    f_max: int = 20
    seed: int = 0
    restarts: int = 8
    denoise: bool = True
    min_component: int | None = None  # None: max(3, ceil(k / 4))
    max_edge: float | str | None = "auto"  # edge-length cut used by denoise
    trim_quantile: float = 0.02
    min_events_per_box: int = 5
    b_mode: str = "nearest"
    max_iter: int = 300
    tol: float = 1e-6
    dbscan_eps: float | None = None
    dbscan_min_pts: int = 5
    meanshift_bandwidth: float | None = None
    gmm_max_iter: int = 200

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.sample_size < 1 or self.k < 1 or self.restarts < 1:
            raise ValueError("sample_size, k and restarts must be >= 1")
        if not 2 <= self.f_min <= self.f_max:
            raise ValueError("need 2 <= f_min <= f_max")
        if isinstance(self.alpha, str) and self.alpha != "auto":
            raise ValueError("alpha must be a positive number or 'auto'")

    @property
    def min_component_size(self) -> int:
        return self.min_component if self.min_component is not None else default_min_component(self.k)

    def time_scale(self, window: EventWindow) -> TimeScale:
        if self.alpha == "auto":
            return TimeScale.auto(window.geometry.width, window.duration)
        return TimeScale(float(self.alpha))

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class WindowResult:
    index: int
    t_start: int
    t_end: int
    n_events: int
    n_sampled: int
    n_removed: int
    alpha: float | None
    detections: DetectionSet
    labels: np.ndarray = field(repr=False)  # per sampled event, -1 when unclustered
    sample: SampleSet | None = field(default=None, repr=False)
    chosen_f: int | None = None
    selection: ModelSelection | None = field(default=None, repr=False)
    skipped: str | None = None

    @property
    def n_clusters(self) -> int:
        return int(len(np.unique(self.labels[self.labels >= 0])))

    def selection_json(self) -> dict:
        doc = {"index": self.index, "chosen_f": self.chosen_f}
        if self.selection is not None:
            sel = self.selection.to_json()
            doc["SC"] = sel["SC"]
            doc["evaluated"] = sel["evaluated"]
        if self.skipped:
            doc["skipped"] = self.skipped
        return doc


def _skip(window: EventWindow, reason: str, sample=None, alpha=None) -> WindowResult:
    log.warning("window %d skipped: %s", window.index, reason)
    n = len(sample) if sample is not None else 0
    return WindowResult(
        index=window.index,
        t_start=window.t_start,
        t_end=window.t_end,
        n_events=len(window),
        n_sampled=n,
        n_removed=0,
        alpha=alpha,
        detections=DetectionSet(window.index),
        labels=np.full(n, -1, dtype=np.int64),
        sample=sample,
        skipped=reason,
    )


def _compact(labels: np.ndarray) -> tuple[np.ndarray, int]:
    ids, inv = np.unique(labels, return_inverse=True)
    return inv.astype(np.int64), len(ids)


def _gmm_sweep(points: SpatioTemporalPoints, cfg: DetectConfig, seed: int) -> tuple[np.ndarray, int]:
    """Fit a GMM per f and keep the silhouette maximiser, as for k-means."""
    upper = min(cfg.f_max, len(points) - 1, n_distinct(points))
    best = None
    for f in range(cfg.f_min, upper + 1):
        fit = baselines.gmm_em(points, f, max_iter=cfg.gmm_max_iter, seed=derive_seed(seed, f))
        labels, present = _compact(fit.labels)
        if present < 2:
            continue
        score = silhouette(points, labels, present, cfg.b_mode).mean_s
        if best is None or score > best[0]:
            best = (score, labels, present)
    if best is None:
        return np.zeros(len(points), dtype=np.int64), 1
    return best[1], best[2]


def cluster_points(points: SpatioTemporalPoints, cfg: DetectConfig, seed: int, threads: int = 1):
    """Labels for ``points`` under the configured method (plus selection for k-means)."""
    if cfg.method == "kmeans":
        sel = select_f(
            points,
            cfg.f_min,
            cfg.f_max,
            seed=seed,
            restarts=cfg.restarts,
            b_mode=cfg.b_mode,
            max_iter=cfg.max_iter,
            tol=cfg.tol,
            threads=threads,
        )
        return sel.best.labels, sel.chosen_f, sel
    if cfg.method == "dbscan":
        eps = cfg.dbscan_eps or 2.0 * baselines.median_nn_distance(points)
        labels = baselines.dbscan(points, eps, cfg.dbscan_min_pts)
        return labels, int(labels.max()) + 1 if len(labels) else 0, None
    if cfg.method == "meanshift":
        bw = cfg.meanshift_bandwidth or 4.0 * baselines.median_nn_distance(points)
        res = baselines.mean_shift(points, bw)
        return res.labels, len(res.modes), None
    labels, f = _gmm_sweep(points, cfg, seed)
    return labels, f, None


def detect_window(window: EventWindow, cfg: DetectConfig, threads: int = 1) -> WindowResult:
    seed = derive_seed(cfg.seed, window.index)
    if len(window) == 0:
        return _skip(window, "empty window")
    sample = uniform_sample(window, cfg.sample_size, seed)
    scale = cfg.time_scale(window)
    points = embed(sample, scale)
    n = len(points)
    removed = 0
    if cfg.denoise and n > 2:
        graph = build_knn_graph(points, min(cfg.k, n - 1), workers=threads)
        cut = cfg.max_edge
        if cut == "auto":
            cut = auto_edge_cut(points)
        dn = denoise(graph, cfg.min_component_size, None if cut is None else float(cut))
        points, removed = dn.points, dn.removed
    if len(points) < cfg.f_min + 1:
        return _skip(window, f"only {len(points)} points after denoising", sample, scale.alpha)
    if cfg.method in ("kmeans", "gmm") and n_distinct(points) < cfg.f_min:
        return _skip(window, "too few distinct points", sample, scale.alpha)

    labels, f, sel = cluster_points(points, cfg, seed, threads)
    full = np.full(len(sample), -1, dtype=np.int64)
    full[points.source_index] = labels
    dets = []
    for cid, ev in clusters_from_labels(sample, points.source_index, labels):
        if len(ev) < cfg.min_events_per_box:
            continue
        box = cluster_bbox(ev, cfg.trim_quantile, cfg.min_events_per_box).clipped(window.geometry)
        dets.append(Detection(box, cid, len(ev)))
    return WindowResult(
        index=window.index,
        t_start=window.t_start,
        t_end=window.t_end,
        n_events=len(window),
        n_sampled=len(sample),
        n_removed=removed,
        alpha=scale.alpha,
        detections=DetectionSet(window.index, tuple(dets)),
        labels=full,
        sample=sample,
        chosen_f=f,
        selection=sel,
    )


def detect(windows: Sequence[EventWindow], cfg: DetectConfig, threads: int | None = None) -> list[WindowResult]:
    """Run every window; results are in window order whatever the worker count."""
    threads = resolve_threads(threads)
    if threads == 1 or len(windows) < 2:
        return [detect_window(w, cfg, threads) for w in windows]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda w: detect_window(w, cfg, 1), windows))

