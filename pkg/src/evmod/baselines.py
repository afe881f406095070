"""Comparison clusterers: DBSCAN, flat-kernel mean shift, diagonal-covariance GMM.

All consume the same ``(n, 3)`` embedded points as k-means and return one
label per point (``-1`` marks DBSCAN noise).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from .clustering import _columns, _coords, _kmeans_pp

NOISE = -1


@dataclass(frozen=True)
class DbscanConfig:
    eps: float | None = None  # None: 2x median nearest-neighbour distance
    min_pts: int = 5


@dataclass(frozen=True)
class MeanShiftConfig:
    bandwidth: float | None = None  # None: 4x median nearest-neighbour distance
    max_iter: int = 300
    merge_tol: float | None = None  # None: bandwidth / 2


@dataclass(frozen=True)
class GmmConfig:
    f: int | None = None  # None: silhouette sweep, as for k-means
    max_iter: int = 200
    tol: float = 1e-6
    reg_covar: float = 1e-6
    seed: int = 0


@dataclass(frozen=True)
class BaselineConfig:
    dbscan: DbscanConfig = DbscanConfig()
    meanshift: MeanShiftConfig = MeanShiftConfig()
    gmm: GmmConfig = GmmConfig()


def median_nn_distance(points) -> float:
    X = _coords(points)
    if len(X) < 2:
        return 1.0
    d, _ = cKDTree(X).query(X, k=2)
    med = float(np.median(d[:, 1]))
    return med if med > 0 else 1.0


def dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """Textbook DBSCAN; cluster ids follow discovery order over point index.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``.  Border points join the first cluster that reaches them.
    """
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be > 0 and min_pts >= 1")
    X = _coords(points)
    n = len(X)
    neigh = cKDTree(X).query_ball_point(X, eps, return_sorted=True) if n else []
    core = np.array([len(nb) >= min_pts for nb in neigh], dtype=bool)
    labels = np.full(n, NOISE, dtype=np.int64)
    cid = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cid
        queue = deque([i])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            for q in neigh[p]:
                if labels[q] == NOISE:
                    labels[q] = cid
                    if core[q]:
                        queue.append(q)
        cid += 1
    return labels


@dataclass(frozen=True)
class MeanShiftResult:
    labels: np.ndarray = field(repr=False)
    modes: np.ndarray = field(repr=False)


def mean_shift(points, bandwidth: float, max_iter: int = 300, merge_tol: float | None = None) -> MeanShiftResult:
    """Flat-kernel mean shift started from every point.

    Each seed moves to the mean of the data within ``bandwidth`` until it
    stops moving.  Converged seeds within ``merge_tol`` of an earlier mode
    join it (lowest point index wins).
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    merge_tol = bandwidth / 2 if merge_tol is None else merge_tol
    X = _coords(points)
    n = len(X)
    tree = cKDTree(X)
    seeds = X.copy()
    active = np.ones(n, dtype=bool)
    stop = 1e-3 * bandwidth
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if not len(idx):
            break
        for i, nb in zip(idx, tree.query_ball_point(seeds[idx], bandwidth)):
            new = X[nb].mean(axis=0) if nb else seeds[i]
            if np.linalg.norm(new - seeds[i]) < stop:
                active[i] = False
            seeds[i] = new
    modes: list[np.ndarray] = []
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        for m, mode in enumerate(modes):
            if np.linalg.norm(seeds[i] - mode) <= merge_tol:
                labels[i] = m
                break
        else:
            labels[i] = len(modes)
            modes.append(seeds[i])
    return MeanShiftResult(labels=labels, modes=np.array(modes).reshape(-1, 3))


@dataclass(frozen=True)
class GmmResult:
    labels: np.ndarray = field(repr=False)
    means: np.ndarray = field(repr=False)
    variances: np.ndarray = field(repr=False)  # diagonal covariances, (f, 3)
    weights: np.ndarray = field(repr=False)
    log_likelihood: float
    trace: tuple[float, ...] = field(default=(), repr=False)
    responsibilities: np.ndarray | None = field(default=None, repr=False)
    converged: bool = False


def _log_prob(X, means, variances, weights):
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    diff2 = (X[:, None, :] - means[None]) ** 2
    return logw - 0.5 * (np.log(2 * np.pi * variances).sum(axis=1) + (diff2 / variances).sum(axis=2))


def gmm_em(
    points,
    f: int,
    max_iter: int = 200,
    tol: float = 1e-6,
    reg_covar: float = 1e-6,
    seed: int = 0,
) -> GmmResult:
    """EM for a diagonal Gaussian mixture, means seeded by k-means++.

    Variances are floored at ``reg_covar`` (a constrained M-step, so the
    log-likelihood stays monotone).  ``tol`` applies to the change in mean
    per-point log-likelihood.
    """
    X = _coords(points)
    n = len(X)
    if not 1 <= f <= n:
        raise ValueError(f"f must satisfy 1 <= f <= {n}, got {f}")
    if reg_covar <= 0:
        raise ValueError("reg_covar must be > 0")
    rng = np.random.default_rng(seed)
    means = _kmeans_pp(_columns(X), f, rng)
    variances = np.tile(np.maximum(X.var(axis=0), reg_covar), (f, 1))
    weights = np.full(f, 1.0 / f)
    trace: list[float] = []
    converged = False
    for _ in range(max_iter):
        lp = _log_prob(X, means, variances, weights)
        norm = logsumexp(lp, axis=1)
        ll = float(norm.sum())
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) / n < tol:
            converged = True
            break
        resp = np.exp(lp - norm[:, None])
        nk = resp.sum(axis=0)
        live = nk > 0
        weights = nk / n
        new_means = means.copy()
        new_means[live] = (resp.T @ X)[live] / nk[live, None]
        diff2 = (X[:, None, :] - new_means[None]) ** 2
        new_var = variances.copy()
        new_var[live] = np.einsum("nk,nkd->kd", resp, diff2)[live] / nk[live, None]
        means = new_means
        variances = np.maximum(new_var, reg_covar)
    lp = _log_prob(X, means, variances, weights)
    norm = logsumexp(lp, axis=1)
    resp = np.exp(lp - norm[:, None])
    if not converged:
        trace.append(float(norm.sum()))
    return GmmResult(
        labels=np.argmax(resp, axis=1).astype(np.int64),
        means=means,
        variances=variances,
        weights=weights,
        log_likelihood=trace[-1],
        trace=tuple(trace),
        responsibilities=resp,
        converged=converged,
    )
