"""Slow reference implementations used as test oracles.

Deliberately naive: plain loops over all pairs, no shared code with the
package under test.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np


def dist(p, q) -> float:
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q)))


def sqdist(p, q) -> float:
    return sum((a - b) ** 2 for a, b in zip(p, q))


def knn_union_edges(points, k: int) -> set[tuple[int, int]]:
    n = len(points)
    edges = set()
    for i in range(n):
        others = sorted((sqdist(points[i], points[j]), j) for j in range(n) if j != i)
        for _, j in others[:k]:
            edges.add((min(i, j), max(i, j)))
    return edges


def silhouette(points, labels, b_mode: str = "nearest") -> list[float]:
    n = len(points)
    clusters = sorted(set(labels))
    out = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            out.append(0.0)
            continue
        a = sum(dist(points[i], points[j]) for j in own) / len(own)
        if b_mode == "nearest":
            b = math.inf
            for c in clusters:
                if c == labels[i]:
                    continue
                members = [j for j in range(n) if labels[j] == c]
                b = min(b, sum(dist(points[i], points[j]) for j in members) / len(members))
        else:
            foreign = [j for j in range(n) if labels[j] != labels[i]]
            b = sum(dist(points[i], points[j]) for j in foreign) / len(foreign)
        m = max(a, b)
        out.append(0.0 if m == 0 else (b - a) / m)
    return out


def dbscan(points, eps: float, min_pts: int) -> list[int]:
    n = len(points)
    neigh = [[j for j in range(n) if dist(points[i], points[j]) <= eps] for i in range(n)]
    core = [len(nb) >= min_pts for nb in neigh]
    labels = [-1] * n
    cid = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cid
        q = deque([i])
        while q:
            p = q.popleft()
            if not core[p]:
                continue
            for j in neigh[p]:
                if labels[j] == -1:
                    labels[j] = cid
                    q.append(j)
        cid += 1
    return labels


def raster_iou(a, b, size: int = 64) -> float:
    """IoU by counting pixels; boxes are (x0, y0, x1, y1), max exclusive."""
    inter = union = 0
    for y in range(size):
        for x in range(size):
            ina = a[0] <= x < a[2] and a[1] <= y < a[3]
            inb = b[0] <= x < b[2] and b[1] <= y < b[3]
            inter += ina and inb
            union += ina or inb
    return inter / union if union else 0.0


# Vectorised all-pairs variants: still O(n^2), fast enough for the
# large acceptance sweeps.


def pairwise(X):
    X = np.asarray(X, dtype=float)
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def silhouette_dense(X, labels, b_mode: str = "nearest"):
    D = pairwise(X)
    labels = np.asarray(labels)
    out = np.zeros(len(labels))
    clusters = np.unique(labels)
    for i in range(len(labels)):
        own = labels == labels[i]
        own_others = own.copy()
        own_others[i] = False
        if not own_others.any():
            continue
        a = D[i, own_others].mean()
        if b_mode == "nearest":
            b = min(D[i, labels == c].mean() for c in clusters if c != labels[i])
        else:
            b = D[i, ~own].mean()
        m = max(a, b)
        out[i] = 0.0 if m == 0 else (b - a) / m
    return out


def knn_union_edges_dense(X, ks):
    """Union-rule edge sets for several k from one all-pairs matrix."""
    X = np.asarray(X, dtype=float)
    n = len(X)
    diff = X[:, None, :] - X[None, :, :]
    d2 = diff[:, :, 0] ** 2 + diff[:, :, 1] ** 2 + diff[:, :, 2] ** 2
    idx = np.arange(n)
    ranked = []
    for i in range(n):
        order = np.lexsort((idx, d2[i]))
        ranked.append(order[order != i])
    result = {}
    for k in ks:
        edges = set()
        for i in range(n):
            for j in ranked[i][:k]:
                edges.add((min(i, int(j)), max(i, int(j))))
        result[k] = edges
    return result


def raster_iou_np(a, b, size: int = 64) -> float:
    ys, xs = np.mgrid[0:size, 0:size]
    ma = (xs >= a[0]) & (xs < a[2]) & (ys >= a[1]) & (ys < a[3])
    mb = (xs >= b[0]) & (xs < b[2]) & (ys >= b[1]) & (ys < b[3])
    union = np.count_nonzero(ma | mb)
    return np.count_nonzero(ma & mb) / union if union else 0.0
