"""Compiled inner loops for Lloyd iterations.

Point coordinates are passed as three contiguous columns so the
centroid-outer / point-inner loops vectorise.  Bound-based schemes
(Hamerly, Elkan) were slower than this in three dimensions.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def assign(x0, x1, x2, C, labels, mind, counts):
    """Nearest centroid per point, ties to the lower id; returns inertia."""
    n = x0.shape[0]
    f = C.shape[0]
    for i in range(n):
        mind[i] = np.inf
    for c in range(f):
        c0 = C[c, 0]
        c1 = C[c, 1]
        c2 = C[c, 2]
        for i in range(n):
            d0 = x0[i] - c0
            d1 = x1[i] - c1
            d2 = x2[i] - c2
            d = d0 * d0 + d1 * d1 + d2 * d2
            m = mind[i]
            closer = d < m
            mind[i] = d if closer else m
            labels[i] = c if closer else labels[i]
    for c in range(f):
        counts[c] = 0
    total = 0.0
    for i in range(n):
        counts[labels[i]] += 1
        total += mind[i]
    return total


@njit(cache=True, nogil=True)
def repair_empty(x0, x1, x2, C, labels, mind, counts):
    """Reseed each empty centroid at the point farthest from its own centroid.

    Only points whose cluster keeps another member are eligible; ties go to
    the lowest index.  Returns the number of clusters repaired.
    """
    f = C.shape[0]
    n = x0.shape[0]
    repaired = 0
    for c in range(f):
        if counts[c] > 0:
            continue
        p = -1
        far = -1.0
        for i in range(n):
            if counts[labels[i]] >= 2 and mind[i] > far:
                far = mind[i]
                p = i
        counts[labels[p]] -= 1
        labels[p] = c
        counts[c] = 1
        C[c, 0] = x0[p]
        C[c, 1] = x1[p]
        C[c, 2] = x2[p]
        mind[p] = 0.0
        repaired += 1
    return repaired


@njit(cache=True, nogil=True)
def centroid_update(x0, x1, x2, labels, C, counts):
    """Move centroids to the means of their points; returns the largest move."""
    f = C.shape[0]
    sums = np.zeros((f, 3))
    for i in range(x0.shape[0]):
        c = labels[i]
        sums[c, 0] += x0[i]
        sums[c, 1] += x1[i]
        sums[c, 2] += x2[i]
    shift = 0.0
    for c in range(f):
        if counts[c] == 0:
            continue
        moved = 0.0
        for a in range(3):
            m = sums[c, a] / counts[c]
            moved += (m - C[c, a]) ** 2
            C[c, a] = m
        if moved > shift:
            shift = moved
    return np.sqrt(shift)


@njit(cache=True, nogil=True)
def lloyd(x0, x1, x2, C, max_iter, tol, labels, mind, trace):
    """Run Lloyd iterations in place.

    ``trace`` (length ``max_iter + 1``) receives the inertia after every
    assignment step.  Returns ``(assignment_steps, converged)``.
    """
    f = C.shape[0]
    counts = np.zeros(f, dtype=np.int64)
    it = 0
    final = False
    while True:
        inertia = assign(x0, x1, x2, C, labels, mind, counts)
        repaired = repair_empty(x0, x1, x2, C, labels, mind, counts)
        if repaired:
            inertia = mind.sum()
        trace[it] = inertia
        if final:
            # extra assignment keeps labels optimal for the returned centroids
            return it, True
        it += 1
        if it >= max_iter:
            return it, False
        shift = centroid_update(x0, x1, x2, labels, C, counts)
        final = shift <= tol and repaired == 0


@njit(cache=True, nogil=True)
def sq_to_point(x0, x1, x2, p0, p1, p2, out):
    for i in range(x0.shape[0]):
        d0 = x0[i] - p0
        d1 = x1[i] - p1
        d2 = x2[i] - p2
        out[i] = d0 * d0 + d1 * d1 + d2 * d2


@njit(cache=True, nogil=True)
def distance_rows(x0, x1, x2, lo, hi, out):
    """Euclidean distances from points ``lo:hi`` to every point, into ``out``."""
    n = x0.shape[0]
    for r in range(hi - lo):
        i = lo + r
        a0 = x0[i]
        a1 = x1[i]
        a2 = x2[i]
        for j in range(n):
            d0 = x0[j] - a0
            d1 = x1[j] - a1
            d2 = x2[j] - a2
            out[r, j] = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
