"""Levenberg-Marquardt refinement of truncated epipolar costs.

The truncation is handled by masking: residuals currently above the
threshold (per match for Dense/Center, per cluster budget for Approx) are
left out of the normal equations, and the mask is rebuilt after every
accepted step.  A step is accepted only if the full truncated cost drops.

Essential models live on R x S^2 (3 rotation + 2 translation tangent
parameters).  Fundamental models take a step in the tangent space of the
unit sphere in R^9 and are then projected back to rank 2.
"""

import enum

import numpy as np

from ._jit import jit, mm, mtv, mv
from .geometry import EpipolarModel, ModelKind
from .summarization import (_approx_cost, _dense_cost, as_summary_set,
                            approx_residuals, pack_points, sampson_errors, _points)

DENSE, CENTER, APPROX = 0, 1, 2


class Data(enum.Enum):
    DENSE = "D"
    CENTER = "C"
    APPROX = "A"

    @property
    def code(self):
        return {"D": DENSE, "C": CENTER, "A": APPROX}[self.value]


@jit(fast=True)
def _cost(E, mode, pts, packed, tau2):
    if mode == DENSE:
        return _dense_cost(E, pts, tau2)
    if mode == CENTER:
        return _dense_cost(E, packed[45:49], tau2)
    return _approx_cost(E, packed, tau2)


@jit
def _grad_terms(E, u1, v1, u2, v2, J):
    """Residual ``r = x2^T E x1 / sqrt(d)`` and its gradient wrt vec(E); returns (r, err)."""
    l0 = E[0, 0] * u1 + E[0, 1] * v1 + E[0, 2]
    l1 = E[1, 0] * u1 + E[1, 1] * v1 + E[1, 2]
    l2 = E[2, 0] * u1 + E[2, 1] * v1 + E[2, 2]
    m0 = E[0, 0] * u2 + E[1, 0] * v2 + E[2, 0]
    m1 = E[0, 1] * u2 + E[1, 1] * v2 + E[2, 1]
    n = u2 * l0 + v2 * l1 + l2
    d = l0 * l0 + l1 * l1 + m0 * m0 + m1 * m1
    if d <= 0.0:
        return 0.0, np.inf
    s = 1.0 / np.sqrt(d)
    h = 0.5 * n * s * s * s
    x = (u1, v1, 1.0)
    xb = (u2, v2, 1.0)
    for j in range(3):
        for i in range(3):
            dd = 0.0
            if i < 2:
                dd += 2.0 * (l0 if i == 0 else l1) * x[j]
            if j < 2:
                dd += 2.0 * (m0 if j == 0 else m1) * xb[i]
            J[3 * j + i] = xb[i] * x[j] * s - h * dd
    return n * s, n * n / d


@jit
def _accumulate(J, r, H, g):
    for a in range(9):
        ja = J[a]
        g[a] += ja * r
        for b in range(a, 9):
            H[a, b] += ja * J[b]


@jit
def _normal_eqs(E, mode, pts, packed, tau2, H, g):
    """Gauss-Newton system in vec(E) over the current inliers; returns their count."""
    H[:] = 0.0
    g[:] = 0.0
    J = np.empty(9)
    used = 0
    if mode == DENSE or mode == CENTER:
        P = pts if mode == DENSE else packed[45:49]
        for n in range(P.shape[1]):
            r, err = _grad_terms(E, P[0, n], P[1, n], P[2, n], P[3, n], J)
            if err < tau2:
                _accumulate(J, r, H, g)
                used += 1
    else:
        e = np.empty(9)
        for j in range(3):
            for i in range(3):
                e[3 * j + i] = E[i, j]
        M = np.zeros((9, 9))
        Me = np.empty(9)
        da = np.empty(9)
        for k in range(packed.shape[1]):
            idx = 0
            for i in range(9):
                for j in range(i, 9):
                    M[i, j] = packed[idx, k]
                    idx += 1
            nu = 0.0
            for i in range(9):
                s = 0.0
                for j in range(i, 9):
                    s += M[i, j] * e[j]
                Me[i] = s
                nu += s * s
            cu, cv, du, dv = packed[45, k], packed[46, k], packed[47, k], packed[48, k]
            l0 = E[0, 0] * cu + E[0, 1] * cv + E[0, 2]
            l1 = E[1, 0] * cu + E[1, 1] * cv + E[1, 2]
            m0 = E[0, 0] * du + E[1, 0] * dv + E[2, 0]
            m1 = E[0, 1] * du + E[1, 1] * dv + E[2, 1]
            alpha = l0 * l0 + l1 * l1 + m0 * m0 + m1 * m1
            if alpha <= 0.0 or nu / alpha >= packed[49, k] * tau2:
                continue
            x = (cu, cv, 1.0)
            xb = (du, dv, 1.0)
            for j in range(3):
                for i in range(3):
                    dd = 0.0
                    if i < 2:
                        dd += 2.0 * (l0 if i == 0 else l1) * x[j]
                    if j < 2:
                        dd += 2.0 * (m0 if j == 0 else m1) * xb[i]
                    da[3 * j + i] = dd
            s = 1.0 / np.sqrt(alpha)
            h = 0.5 * s * s * s
            # rows of J = M / sqrt(alpha) - Me da^T / (2 alpha^1.5)
            for i in range(9):
                for j in range(9):
                    J[j] = (M[i, j] if j >= i else 0.0) * s - h * Me[i] * da[j]
                _accumulate(J, Me[i] * s, H, g)
            used += 1
    for a in range(9):
        for b in range(a):
            H[a, b] = H[b, a]
    return used


# --- parameterizations ------------------------------------------------------

@jit
def _hat(t):
    T = np.zeros((3, 3))
    T[0, 1] = -t[2]
    T[0, 2] = t[1]
    T[1, 0] = t[2]
    T[1, 2] = -t[0]
    T[2, 0] = -t[1]
    T[2, 1] = t[0]
    return T


@jit
def _rodrigues(w):
    th = np.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    W = _hat(w)
    if th < 1e-12:
        return np.eye(3) + W
    return np.eye(3) + np.sin(th) / th * W + (1.0 - np.cos(th)) / (th * th) * mm(W, W)


@jit
def _sphere_basis(t):
    """Two unit vectors orthogonal to unit ``t`` and to each other."""
    a = np.zeros(3)
    a[np.argmin(np.abs(t))] = 1.0
    b1 = np.cross(t, a)
    b1 /= np.sqrt(np.sum(b1 * b1))
    b2 = np.cross(t, b1)
    return b1, b2


@jit
def _vec(A, D, col):
    for j in range(3):
        for i in range(3):
            D[3 * j + i, col] = A[i, j]


@jit
def _essential_tangent(R, t):
    D = np.empty((9, 5))
    T = _hat(t)
    TR = mm(T, R)
    for j in range(3):
        ej = np.zeros(3)
        ej[j] = 1.0
        _vec(mm(TR, _hat(ej)), D, j)
    b1, b2 = _sphere_basis(t)
    _vec(mm(_hat(b1), R), D, 3)
    _vec(mm(_hat(b2), R), D, 4)
    return D


@jit
def _sphere_tangent9(f):
    """Orthonormal 9 x 8 basis of the tangent space at unit ``f`` (Householder)."""
    v = f.copy()
    s = 1.0 if f[0] >= 0 else -1.0
    v[0] += s
    vv = np.sum(v * v)
    Q = np.eye(9) - (2.0 / vv) * np.outer(v, v)
    return np.ascontiguousarray(Q[:, 1:])


@jit
def _solve_damped(A, b, lam):
    """Solve ``(A + lam * diag(A)) x = b`` by Cholesky; returns (x, ok)."""
    n = A.shape[0]
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = A[i, j]
            if i == j:
                s += lam * A[i, i] + 1e-15 * (1.0 + A[i, i])
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0:
                    return np.zeros(n), False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x, True


@jit
def _rank2(F):
    U, s, Vt = np.linalg.svd(F)
    s[2] = 0.0
    G = mm(U * s, Vt)
    return G / np.sqrt(np.sum(G * G))


@jit
def _lm(kind, R, t, F, mode, pts, packed, tau2, max_steps):
    """Shared LM loop; returns (R, t, F, cost, steps).

    ``kind`` 0 refines the essential pose (R, t), 1 the fundamental F.
    """
    H = np.empty((9, 9))
    g = np.empty(9)
    if kind == 0:
        E = mm(_hat(t), R)
    else:
        E = F.copy()
    cost = _cost(E, mode, pts, packed, tau2)[0]
    lam = 1e-3
    steps = 0
    fresh = True
    f = np.zeros(9)
    D = np.zeros((9, 1))
    A = np.zeros((1, 1))
    b = np.zeros(1)
    R2 = R
    t2 = t
    while steps < max_steps:
        if fresh:
            used = _normal_eqs(E, mode, pts, packed, tau2, H, g)
            if used == 0:
                break
            if kind == 0:
                D = _essential_tangent(R, t)
            else:
                f = np.empty(9)
                for j in range(3):
                    for i in range(3):
                        f[3 * j + i] = E[i, j]
                f /= np.sqrt(np.sum(f * f))
                D = _sphere_tangent9(f)
            A = mm(mm(D.T, H), D)
            b = mtv(D, g)
            fresh = False
        steps += 1
        delta, ok = _solve_damped(A, -b, lam)
        if not ok:
            lam *= 10.0
            continue
        if kind == 0:
            R2 = mm(R, _rodrigues(delta[:3]))
            b1, b2 = _sphere_basis(t)
            t2 = t + delta[3] * b1 + delta[4] * b2
            t2 /= np.sqrt(np.sum(t2 * t2))
            E2 = mm(_hat(t2), R2)
        else:
            f2 = f + mv(D, delta)
            F2 = np.empty((3, 3))
            for j in range(3):
                for i in range(3):
                    F2[i, j] = f2[3 * j + i]
            E2 = _rank2(F2)
        c2 = _cost(E2, mode, pts, packed, tau2)[0]
        if c2 < cost:
            rel = (cost - c2) / max(cost, 1e-300)
            cost = c2
            E = E2
            if kind == 0:
                R = R2
                t = t2
            lam = max(lam * 0.1, 1e-12)
            fresh = True
            if rel < 1e-12:
                break
        else:
            lam *= 10.0
            if lam > 1e12:
                break
    return R, t, E, cost, steps


# --- public API -------------------------------------------------------------

def _data_arrays(matches, summaries):
    pts = np.zeros((4, 1)) if matches is None else (
        matches if isinstance(matches, np.ndarray) else pack_points(*_points(matches)))
    packed = np.zeros((50, 1)) if summaries is None else as_summary_set(summaries).packed
    return np.ascontiguousarray(pts), np.ascontiguousarray(packed)


def refine(model, data, method, tau, max_steps=100):
    """Refine ``model`` on the truncated cost of the chosen data.

    ``data`` is the match set (batched Match, ``(x1, x2)`` or packed
    ``(4, N)``) for Dense, or the summaries for Center/Approx.  Essential
    models are refined over (R, t); the pose may be passed directly as a
    RelativePose.
    """
    from .geometry import RelativePose, decompose_essential
    method = Data(method)
    mode = method.code
    if mode == DENSE:
        pts, packed = _data_arrays(data, None)
    else:
        pts, packed = _data_arrays(None, data)
    tau2 = float(tau) ** 2
    if isinstance(model, RelativePose):
        R, t = model.R, model.t
        kind = 0
    elif getattr(model, "kind", ModelKind.ESSENTIAL) is ModelKind.ESSENTIAL:
        pose = decompose_essential(np.asarray(model, dtype=float))[0]
        R, t = pose.R, pose.t
        kind = 0
    else:
        R, t = np.eye(3), np.zeros(3)
        kind = 1
    F = np.ascontiguousarray(np.asarray(model, dtype=float)) if kind == 1 else np.eye(3)
    _, _, E, _, _ = _lm(kind, np.ascontiguousarray(R, dtype=float),
                        np.ascontiguousarray(t, dtype=float), F, mode, pts, packed,
                        tau2, int(max_steps))
    return EpipolarModel(E, ModelKind.ESSENTIAL if kind == 0 else ModelKind.FUNDAMENTAL)


def classify_inliers(model, data, method, tau):
    """Strict inlier flags: per match for Dense/Center, per cluster for Approx."""
    method = Data(method)
    tau2 = float(tau) ** 2
    if method is Data.DENSE:
        return sampson_errors(model, data) < tau2
    s = as_summary_set(data)
    if method is Data.CENTER:
        return sampson_errors(model, (s.c, s.c_bar)) < tau2
    return approx_residuals(model, s) < s.size * tau2
