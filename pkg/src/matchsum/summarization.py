"""Cluster summaries and the three scoring backends.

A cluster of correspondences is compressed into its representative match,
its size and a 9 x 9 upper-triangular matrix ``M`` with ``M^T M = A^T A``,
where each row of ``A`` is the Kronecker constraint ``x (x) x_bar``.  Since
``||A e||^2 = ||M e||^2`` the summed algebraic error of a whole cluster is
available from ``M`` alone, and dividing by the Sampson denominator taken at
the representative approximates the summed Sampson error.

Model vectors are column-major: ``e[3 * j + i] = E[i, j]``.

Kernels work on structure-of-arrays buffers.  Dense data is ``(4, N)`` rows
``[u1, v1, u2, v2]`` of normalized points; summaries are packed into
``(50, K)``: 45 upper-triangular entries of ``M`` (row-major), then
``c_u, c_v, c_bar_u, c_bar_v`` and the cluster size.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._jit import jit
from .geometry import Match

PACKED_ROWS = 50
_TRI_I, _TRI_J = np.triu_indices(9)


class Cost(NamedTuple):
    score: float
    inliers: int


def constraint_row(x1, x2):
    """Kronecker constraint row(s) ``a = x1 (x) x2`` so that ``a @ vec(E) = x2^T E x1``."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return (x1[..., :, None] * x2[..., None, :]).reshape(x1.shape[:-1] + (9,))


def model_vector(model):
    return np.asarray(model, dtype=float).reshape(9, order="F")


@dataclass(frozen=True)
class ClusterSummary:
    c: np.ndarray
    c_bar: np.ndarray
    size: int
    M: np.ndarray


@dataclass(frozen=True)
class SummarySet:
    """K cluster summaries stored side by side."""
    M: np.ndarray          # (K, 9, 9)
    c: np.ndarray          # (K, 3)
    c_bar: np.ndarray      # (K, 3)
    size: np.ndarray       # (K,)
    packed: np.ndarray     # (50, K)

    def __len__(self):
        return len(self.size)

    def __getitem__(self, k):
        return ClusterSummary(self.c[k], self.c_bar[k], int(self.size[k]), self.M[k])

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    @classmethod
    def from_arrays(cls, M, c, c_bar, size):
        M = np.asarray(M, dtype=float).reshape(-1, 9, 9)
        c = np.asarray(c, dtype=float).reshape(-1, 3)
        c_bar = np.asarray(c_bar, dtype=float).reshape(-1, 3)
        size = np.asarray(size, dtype=np.int64).reshape(-1)
        packed = np.empty((PACKED_ROWS, len(size)))
        packed[:45] = M[:, _TRI_I, _TRI_J].T
        packed[45:47] = c[:, :2].T
        packed[47:49] = c_bar[:, :2].T
        packed[49] = size
        return cls(M, c, c_bar, size, packed)


def as_summary_set(summaries):
    if isinstance(summaries, SummarySet):
        return summaries
    if isinstance(summaries, ClusterSummary):
        summaries = [summaries]
    summaries = list(summaries)
    return SummarySet.from_arrays(
        [s.M for s in summaries], [s.c for s in summaries],
        [s.c_bar for s in summaries], [s.size for s in summaries])


def _points(matches):
    """Normalized (x1, x2) arrays from a batched Match or an (x1, x2) pair."""
    if isinstance(matches, Match):
        x1, x2 = matches.n1, matches.n2
    else:
        x1, x2 = matches
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    if x1.shape[-1] == 2:
        x1 = np.concatenate([x1, np.ones((len(x1), 1))], axis=1)
        x2 = np.concatenate([x2, np.ones((len(x2), 1))], axis=1)
    return x1, x2


def pack_points(x1, x2):
    """Structure-of-arrays ``(4, N)`` buffer used by the dense kernels."""
    x1, x2 = _points((x1, x2))
    out = np.empty((4, len(x1)))
    out[0] = x1[:, 0] / x1[:, 2]
    out[1] = x1[:, 1] / x1[:, 2]
    out[2] = x2[:, 0] / x2[:, 2]
    out[3] = x2[:, 1] / x2[:, 2]
    return out


def _matrix(model):
    return np.ascontiguousarray(np.asarray(model, dtype=float))


# --- construction -----------------------------------------------------------

@jit
def _psd_cholesky(G, M):
    """Upper factor of a PSD matrix, ``G = M^T M``.

    Pivots at or below ``1e-13 * tr(G)`` are treated as exact zeros and their
    rows left empty, which keeps rank-deficient Gram matrices exact instead
    of perturbing them with jitter.
    """
    n = G.shape[0]
    tr = 0.0
    for i in range(n):
        tr += G[i, i]
    tol = 1e-13 * tr
    for i in range(n):
        for j in range(n):
            M[i, j] = 0.0
    for i in range(n):
        d = G[i, i]
        for k in range(i):
            d -= M[k, i] * M[k, i]
        if d <= tol:
            continue
        r = np.sqrt(d)
        M[i, i] = r
        for j in range(i + 1, n):
            s = G[i, j]
            for k in range(i):
                s -= M[k, i] * M[k, j]
            M[i, j] = s / r


@jit
def _summarize(x1, x2, labels, K, M):
    G = np.zeros((K, 9, 9))
    a = np.empty(9)
    for n in range(x1.shape[0]):
        k = labels[n]
        for i in range(3):
            for j in range(3):
                a[3 * i + j] = x1[n, i] * x2[n, j]
        for i in range(9):
            ai = a[i]
            for j in range(i, 9):
                G[k, i, j] += ai * a[j]
    for k in range(K):
        for i in range(9):
            for j in range(i):
                G[k, i, j] = G[k, j, i]
        _psd_cholesky(G[k], M[k])
    return G


def gram(x1, x2):
    A = constraint_row(*_points((x1, x2)))
    return A.T @ A


def summarize(x1, x2, labels, representatives):
    """Summaries of every cluster given per-match labels in ``[0, K)``.

    ``representatives[k]`` is the index of cluster k's representative match.
    """
    x1, x2 = _points((x1, x2))
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise ValueError("match coordinates must be finite")
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    reps = np.asarray(representatives, dtype=np.int64)
    K = len(reps)
    M = np.empty((K, 9, 9))
    _summarize(x1, x2, labels, K, M)
    size = np.bincount(labels, minlength=K)[:K]
    return SummarySet.from_arrays(M, x1[reps], x2[reps], size)


def summarize_cluster(members, rep):
    """Summary of one cluster; ``members`` as for the cost functions, ``rep`` a (c, c_bar) pair."""
    x1, x2 = _points(members)
    if len(x1) < 1:
        raise ValueError("a cluster needs at least one member")
    c, c_bar = _points(rep)
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise ValueError("match coordinates must be finite")
    M = np.empty((1, 9, 9))
    _summarize(x1, x2, np.zeros(len(x1), dtype=np.int64), 1, M)
    return ClusterSummary(c[0], c_bar[0], len(x1), M[0])


# --- kernels ----------------------------------------------------------------

@jit(fast=True)
def _sampson_into(E, pts, out):
    e00, e01, e02 = E[0, 0], E[0, 1], E[0, 2]
    e10, e11, e12 = E[1, 0], E[1, 1], E[1, 2]
    e20, e21, e22 = E[2, 0], E[2, 1], E[2, 2]
    u1, v1, u2, v2 = pts[0], pts[1], pts[2], pts[3]
    for n in range(pts.shape[1]):
        a = e00 * u1[n] + e01 * v1[n] + e02
        b = e10 * u1[n] + e11 * v1[n] + e12
        c = e20 * u1[n] + e21 * v1[n] + e22
        p = e00 * u2[n] + e10 * v2[n] + e20
        q = e01 * u2[n] + e11 * v2[n] + e21
        r = u2[n] * a + v2[n] * b + c
        d = a * a + b * b + p * p + q * q
        out[n] = r * r / d if d > 0.0 else np.inf


@jit(fast=True)
def _dense_cost(E, pts, tau2):
    e00, e01, e02 = E[0, 0], E[0, 1], E[0, 2]
    e10, e11, e12 = E[1, 0], E[1, 1], E[1, 2]
    e20, e21, e22 = E[2, 0], E[2, 1], E[2, 2]
    u1, v1, u2, v2 = pts[0], pts[1], pts[2], pts[3]
    score = 0.0
    count = 0
    for n in range(pts.shape[1]):
        a = e00 * u1[n] + e01 * v1[n] + e02
        b = e10 * u1[n] + e11 * v1[n] + e12
        c = e20 * u1[n] + e21 * v1[n] + e22
        p = e00 * u2[n] + e10 * v2[n] + e20
        q = e01 * u2[n] + e11 * v2[n] + e21
        r = u2[n] * a + v2[n] * b + c
        d = a * a + b * b + p * p + q * q
        err = r * r / d if d > 0.0 else np.inf
        inl = err < tau2
        score += err if inl else tau2
        count += 1 if inl else 0
    return score, count


@jit(fast=True)
def _approx_into(E, packed, out_num, out_alpha):
    """Numerators ``||M e||^2`` and representative denominators per cluster."""
    e = np.empty(9)
    for j in range(3):
        for i in range(3):
            e[3 * j + i] = E[i, j]
    K = packed.shape[1]
    for k in range(K):
        num = 0.0
        idx = 0
        for i in range(9):
            s = 0.0
            for j in range(i, 9):
                s += packed[idx, k] * e[j]
                idx += 1
            num += s * s
        cu, cv = packed[45, k], packed[46, k]
        du, dv = packed[47, k], packed[48, k]
        a = E[0, 0] * cu + E[0, 1] * cv + E[0, 2]
        b = E[1, 0] * cu + E[1, 1] * cv + E[1, 2]
        p = E[0, 0] * du + E[1, 0] * dv + E[2, 0]
        q = E[0, 1] * du + E[1, 1] * dv + E[2, 1]
        out_num[k] = num
        out_alpha[k] = a * a + b * b + p * p + q * q


@jit(fast=True)
def _approx_cost(E, packed, tau2):
    e0, e1, e2 = E[0, 0], E[1, 0], E[2, 0]
    e3, e4, e5 = E[0, 1], E[1, 1], E[2, 1]
    e6, e7, e8 = E[0, 2], E[1, 2], E[2, 2]
    P = packed
    score = 0.0
    count = 0
    for k in range(P.shape[1]):
        # M is upper triangular: row i touches e[i:]
        m0 = (P[0, k] * e0 + P[1, k] * e1 + P[2, k] * e2 + P[3, k] * e3 + P[4, k] * e4
              + P[5, k] * e5 + P[6, k] * e6 + P[7, k] * e7 + P[8, k] * e8)
        m1 = (P[9, k] * e1 + P[10, k] * e2 + P[11, k] * e3 + P[12, k] * e4 + P[13, k] * e5
              + P[14, k] * e6 + P[15, k] * e7 + P[16, k] * e8)
        m2 = (P[17, k] * e2 + P[18, k] * e3 + P[19, k] * e4 + P[20, k] * e5 + P[21, k] * e6
              + P[22, k] * e7 + P[23, k] * e8)
        m3 = (P[24, k] * e3 + P[25, k] * e4 + P[26, k] * e5 + P[27, k] * e6 + P[28, k] * e7
              + P[29, k] * e8)
        m4 = P[30, k] * e4 + P[31, k] * e5 + P[32, k] * e6 + P[33, k] * e7 + P[34, k] * e8
        m5 = P[35, k] * e5 + P[36, k] * e6 + P[37, k] * e7 + P[38, k] * e8
        m6 = P[39, k] * e6 + P[40, k] * e7 + P[41, k] * e8
        m7 = P[42, k] * e7 + P[43, k] * e8
        m8 = P[44, k] * e8
        num = (m0 * m0 + m1 * m1 + m2 * m2 + m3 * m3 + m4 * m4
               + m5 * m5 + m6 * m6 + m7 * m7 + m8 * m8)
        cu, cv, du, dv = P[45, k], P[46, k], P[47, k], P[48, k]
        a = e0 * cu + e3 * cv + e6
        b = e1 * cu + e4 * cv + e7
        p = e0 * du + e1 * dv + e2
        q = e3 * du + e4 * dv + e5
        alpha = a * a + b * b + p * p + q * q
        res = num / alpha if alpha > 0.0 else np.inf
        budget = P[49, k] * tau2
        inl = res < budget
        score += res if inl else budget
        count += 1 if inl else 0
    return score, count


@jit(fast=True)
def _center_cost(E, packed, tau2):
    return _dense_cost(E, packed[45:49], tau2)


# --- public costs -----------------------------------------------------------

def sampson_errors(model, matches):
    pts = pack_points(*_points(matches))
    out = np.empty(pts.shape[1])
    _sampson_into(_matrix(model), pts, out)
    return out


def cost_dense(model, matches, tau):
    """Truncated Sampson cost ``sum(min(err, tau^2))`` and the inlier count."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    pts = matches if isinstance(matches, np.ndarray) else pack_points(*_points(matches))
    s, n = _dense_cost(_matrix(model), pts, float(tau) ** 2)
    return Cost(float(s), int(n))


def cost_center(model, summaries, tau):
    """Truncated cost over the cluster representatives only."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    s, n = _center_cost(_matrix(model), as_summary_set(summaries).packed, float(tau) ** 2)
    return Cost(float(s), int(n))


def cost_approx(model, summaries, tau):
    """``sum_k min(||M_k e||^2 / alpha_k, |C_k| tau^2)`` and the inlier-cluster count."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    s, n = _approx_cost(_matrix(model), as_summary_set(summaries).packed, float(tau) ** 2)
    return Cost(float(s), int(n))


def approx_terms(model, summaries):
    """Per-cluster ``||M e||^2`` and representative Sampson denominator ``alpha``."""
    P = as_summary_set(summaries).packed
    num = np.empty(P.shape[1])
    alpha = np.empty(P.shape[1])
    _approx_into(_matrix(model), P, num, alpha)
    return num, alpha


def approx_residuals(model, summaries):
    """Approximate summed Sampson error of every cluster (``inf`` where alpha = 0)."""
    num, alpha = approx_terms(model, summaries)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(alpha > 0, num / alpha, np.inf)


def approx_cluster_residual(model, summary):
    return float(approx_residuals(model, summary)[0])


def approx_symmetric_epipolar(model, summary):
    """Approximate summed symmetric epipolar distance of one cluster."""
    E = np.asarray(model, dtype=float)
    s = summary if isinstance(summary, ClusterSummary) else as_summary_set(summary)[0]
    Me = s.M @ model_vector(E)
    num = float(Me @ Me)
    l1 = E @ s.c
    l2 = E.T @ s.c_bar
    d1 = l1[0] ** 2 + l1[1] ** 2
    d2 = l2[0] ** 2 + l2[1] ** 2
    if d1 <= 0 or d2 <= 0:
        return np.inf
    return num / d1 + num / d2
