"""Grouping matches into clusters and picking one representative per cluster.

Matches are passed as a batched :class:`~matchsum.geometry.Match` whose
fields are ``(N, 2)`` pixel and ``(N, 3)`` normalized arrays.
"""

import enum
from dataclasses import dataclass, replace

import numpy as np

from ._jit import jit
from .summarization import constraint_row


class ClusterSpace(enum.Enum):
    KEYPOINTS_2D = "2d"
    MATCHES_4D = "4d"
    CONSTRAINTS_9D = "9d"
    GRID = "grid"


@dataclass(frozen=True)
class Clustering:
    assignment: np.ndarray            # (N,) cluster index per match
    centroids: np.ndarray             # (K, d) in the embedding space
    representatives: np.ndarray = None
    space: ClusterSpace = ClusterSpace.MATCHES_4D

    @property
    def K(self):
        return len(self.centroids)

    @property
    def sizes(self):
        return np.bincount(self.assignment, minlength=self.K)


def embed(matches, space):
    """Feature vectors of the given cluster space, one row per match."""
    space = ClusterSpace(space)
    if space is ClusterSpace.KEYPOINTS_2D:
        return np.asarray(matches.p1, dtype=float).reshape(-1, 2).copy()
    if space is ClusterSpace.MATCHES_4D:
        return np.hstack([np.asarray(matches.p1, dtype=float).reshape(-1, 2),
                          np.asarray(matches.p2, dtype=float).reshape(-1, 2)])
    if space is ClusterSpace.CONSTRAINTS_9D:
        return constraint_row(np.atleast_2d(matches.n1), np.atleast_2d(matches.n2))
    raise ValueError("grid clustering has no feature embedding")


@jit
def _assign(X, C, labels):
    N, d = X.shape
    K = C.shape[0]
    changed = 0
    for n in range(N):
        best = np.inf
        arg = 0
        for k in range(K):
            s = 0.0
            for j in range(d):
                t = X[n, j] - C[k, j]
                s += t * t
            if s < best:
                best = s
                arg = k
        if labels[n] != arg:
            changed += 1
            labels[n] = arg
    return changed


@jit
def _means(X, labels, C):
    K, d = C.shape
    acc = np.zeros((K, d))
    cnt = np.zeros(K, dtype=np.int64)
    for n in range(X.shape[0]):
        k = labels[n]
        cnt[k] += 1
        for j in range(d):
            acc[k, j] += X[n, j]
    for k in range(K):
        if cnt[k] > 0:
            for j in range(d):
                C[k, j] = acc[k, j] / cnt[k]


def _kmeanspp(X, K, rng):
    N = len(X)
    centers = np.empty(K, dtype=np.int64)
    centers[0] = rng.integers(N)
    d2 = np.sum((X - X[centers[0]]) ** 2, axis=1)
    for i in range(1, K):
        total = d2.sum()
        if total <= 0:
            # fewer distinct points than K; fill with unused indices
            pool = np.setdiff1d(np.arange(N), centers[:i])
            centers[i:] = pool[:K - i]
            break
        centers[i] = min(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"), N - 1)
        d2 = np.minimum(d2, np.sum((X - X[centers[i]]) ** 2, axis=1))
    return X[centers].copy()


def _compact(labels, centroids):
    """Drop empty clusters and renumber the rest in order."""
    used = np.bincount(labels, minlength=len(centroids)) > 0
    remap = np.cumsum(used) - 1
    return remap[labels], centroids[used]


def kmeans_cost(X, labels, centroids):
    return float(np.sum((X - centroids[labels]) ** 2))


def kmeans(features, K, max_iter=5, seed=0, history=None):
    """Lloyd's k-means from a seeded k-means++ start.

    At most ``max_iter`` rounds of (update means, reassign) are run.  If
    ``history`` is a list, the cost after the initial assignment and after
    every round is appended to it.
    """
    X = np.ascontiguousarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) == 0:
        raise ValueError("no features to cluster")
    if K < 1:
        raise ValueError("K must be at least 1")
    K = min(int(K), len(X))
    rng = np.random.default_rng(seed)
    C = _kmeanspp(X, K, rng)
    labels = np.full(len(X), -1, dtype=np.int64)
    _assign(X, C, labels)
    if history is not None:
        history.append(kmeans_cost(X, labels, C))
    for _ in range(max_iter):
        _means(X, labels, C)
        changed = _assign(X, C, labels)
        if history is not None:
            history.append(kmeans_cost(X, labels, C))
        if changed == 0:
            break
    labels, C = _compact(labels, C)
    return Clustering(labels, C)


def grid_cluster(matches, K):
    """Split image 1's keypoint bounding box into ``m x m`` cells, ``m = ceil(sqrt(K))``.

    Cells are numbered row-major; points on the max edge go to the last
    row/column.  Centroids are the 4D means of the members.
    """
    p1 = np.asarray(matches.p1, dtype=float).reshape(-1, 2)
    if len(p1) == 0:
        raise ValueError("no matches to cluster")
    m = int(np.ceil(np.sqrt(K)))
    lo = p1.min(axis=0)
    span = p1.max(axis=0) - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        cell = np.where(span > 0, np.floor((p1 - lo) / span * m), 0)
    cell = np.clip(cell, 0, m - 1).astype(np.int64)
    labels = cell[:, 1] * m + cell[:, 0]
    X = embed(matches, ClusterSpace.MATCHES_4D)
    C = np.zeros((m * m, 4))
    _means(X, labels, C)
    labels, C = _compact(labels, C)
    return Clustering(labels, C, space=ClusterSpace.GRID)


def select_representatives(matches, clustering, in_4d=False):
    """Member closest to each centroid; ties go to the lowest match index.

    Distances are taken in the clustering's own space (grid uses 4D); with
    ``in_4d`` they are always taken in 4D match space against the 4D means.
    """
    labels = clustering.assignment
    if in_4d or clustering.space is ClusterSpace.GRID:
        X = embed(matches, ClusterSpace.MATCHES_4D)
        C = np.zeros((clustering.K, 4))
        _means(X, labels, C)
    else:
        X = embed(matches, clustering.space)
        C = clustering.centroids
    d2 = np.sum((X - C[labels]) ** 2, axis=1)
    # stable lexsort: by cluster, then distance, then index
    order = np.lexsort((np.arange(len(labels)), d2, labels))
    first = np.r_[True, labels[order][1:] != labels[order][:-1]]
    reps = np.empty(clustering.K, dtype=np.int64)
    reps[labels[order][first]] = order[first]
    return replace(clustering, representatives=reps)


def cluster(matches, K, space=ClusterSpace.MATCHES_4D, max_iter=5, seed=0, in_4d=False):
    """Cluster ``matches`` and fill in representatives."""
    space = ClusterSpace(space)
    if space is ClusterSpace.GRID:
        cl = grid_cluster(matches, K)
    else:
        cl = replace(kmeans(embed(matches, space), K, max_iter, seed), space=space)
    return select_representatives(matches, cl, in_4d=in_4d)
