"""Minimal solvers: five-point essential, seven-point fundamental, and the
summary-nullspace variant of the five-point solver.

Model vectors use the column-major convention shared with
:mod:`matchsum.summarization`: ``e[3 * j + i] = E[i, j]``.  The compiled
entry points (``_five_point``, ``_seven_point``, ...) are called from the
RANSAC kernel; the plain functions wrap them for interactive use.
"""

import numpy as np

from ._jit import jit, mm
from ._poly import real_roots
from .geometry import EpipolarModel, ModelKind

# Monomials in (x, y, z) up to degree three, ordered so that Gauss-Jordan
# elimination of the first ten columns leaves the rows needed to build the
# 3x3 polynomial matrix in z.
_MONOMIALS = [
    (3, 0, 0), (0, 3, 0), (2, 1, 0), (1, 2, 0), (2, 0, 1),
    (2, 0, 0), (0, 2, 1), (0, 2, 0), (1, 1, 1), (1, 1, 0),
    (1, 0, 2), (1, 0, 1), (1, 0, 0), (0, 1, 2), (0, 1, 1),
    (0, 1, 0), (0, 0, 3), (0, 0, 2), (0, 0, 1), (0, 0, 0),
]
_LINEAR = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 0, 0)]
_QUADRATIC = [
    (2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1),
    (0, 1, 1), (1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 0, 0),
]


def _product_table(left, right, target):
    index = {m: i for i, m in enumerate(target)}
    table = np.empty((len(left), len(right)), dtype=np.int64)
    for a, ma in enumerate(left):
        for b, mb in enumerate(right):
            table[a, b] = index[tuple(u + v for u, v in zip(ma, mb))]
    return table


_LL = _product_table(_LINEAR, _LINEAR, _QUADRATIC)
_QL = _product_table(_QUADRATIC, _LINEAR, _MONOMIALS)


@jit
def _nullspace(A, dim):
    """Orthonormal basis (rows) of the right nullspace of the m x 9 matrix ``A``.

    Householder QR of ``A.T``; the trailing ``dim`` columns of Q.
    """
    m = A.shape[0]
    Q = np.empty((9, m))
    for i in range(9):
        for j in range(m):
            Q[i, j] = A[j, i]
    vs = np.zeros((m, 9))
    for k in range(m):
        norm = 0.0
        for i in range(k, 9):
            norm += Q[i, k] * Q[i, k]
        norm = np.sqrt(norm)
        alpha = -norm if Q[k, k] >= 0.0 else norm
        vnorm = 0.0
        for i in range(k, 9):
            vs[k, i] = Q[i, k]
        vs[k, k] -= alpha
        for i in range(k, 9):
            vnorm += vs[k, i] * vs[k, i]
        if vnorm > 0.0:
            vnorm = np.sqrt(vnorm)
            for i in range(k, 9):
                vs[k, i] /= vnorm
        for j in range(k, m):
            d = 0.0
            for i in range(k, 9):
                d += vs[k, i] * Q[i, j]
            for i in range(k, 9):
                Q[i, j] -= 2.0 * d * vs[k, i]
    basis = np.zeros((dim, 9))
    for r in range(dim):
        basis[r, 9 - dim + r] = 1.0
        for k in range(m - 1, -1, -1):
            d = 0.0
            for i in range(k, 9):
                d += vs[k, i] * basis[r, i]
            for i in range(k, 9):
                basis[r, i] -= 2.0 * d * vs[k, i]
    return basis


@jit
def _constraint_rows(x1, x2):
    n = x1.shape[0]
    A = np.empty((n, 9))
    for r in range(n):
        for j in range(3):
            for i in range(3):
                A[r, 3 * j + i] = x1[r, j] * x2[r, i]
    return A


@jit
def _mul_ll(a, b, out, sign):
    for i in range(4):
        for j in range(4):
            out[_LL[i, j]] += sign * a[i] * b[j]


@jit
def _mul_ql(q, a, out, sign):
    for i in range(10):
        qi = sign * q[i]
        for j in range(4):
            out[_QL[i, j]] += qi * a[j]


@jit
def _poly_mul(a, b):
    out = np.zeros(a.shape[0] + b.shape[0] - 1)
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            out[i + j] += a[i] * b[j]
    return out


@jit
def _poly_sub(a, b):
    n = max(a.shape[0], b.shape[0])
    out = np.zeros(n)
    for i in range(a.shape[0]):
        out[n - a.shape[0] + i] += a[i]
    for i in range(b.shape[0]):
        out[n - b.shape[0] + i] -= b[i]
    return out


@jit
def _poly_eval(c, z):
    v = 0.0
    for i in range(c.shape[0]):
        v = v * z + c[i]
    return v


@jit
def _essential_residual(E):
    """max |2 E E^T E - tr(E E^T) E| for a unit-norm E."""
    EEt = mm(E, E.T)
    tr = EEt[0, 0] + EEt[1, 1] + EEt[2, 2]
    C = 2.0 * mm(EEt, E) - tr * E
    return np.max(np.abs(C))


@jit
def _constraints(E, r):
    """The nine cubic trace constraints and det(E), scaled by ||E||^3."""
    EEt = mm(E, E.T)
    tr = EEt[0, 0] + EEt[1, 1] + EEt[2, 2]
    C = 2.0 * mm(EEt, E) - tr * E
    s = tr * np.sqrt(tr)
    for i in range(3):
        for j in range(3):
            r[3 * i + j] = C[i, j] / s
    r[9] = _det3(E) / s
    return tr


@jit
def _polish_xyz(basis, xyz):
    """Gauss-Newton on the essential constraints over E = x B0 + y B1 + z B2 + B3.

    Roots of the hidden-variable polynomial can be off by ~1e-6 when two of
    them are close; a few steps bring the model back to rounding level.
    """
    E = np.empty((3, 3))
    r = np.empty(10)
    rt = np.empty(10)
    J = np.empty((10, 3))
    trial = np.empty(3)
    h = 1e-7

    def build(v, out):
        for j in range(3):
            for i in range(3):
                out[i, j] = (v[0] * basis[0, 3 * j + i] + v[1] * basis[1, 3 * j + i]
                             + v[2] * basis[2, 3 * j + i] + basis[3, 3 * j + i])

    build(xyz, E)
    _constraints(E, r)
    cost = np.sum(r * r)
    for _ in range(6):
        if cost < 1e-30:
            break
        # forward-difference Jacobian; the constraints are cubic so this is
        # accurate to ~h relative, plenty for a Gauss-Newton direction
        for k in range(3):
            for q in range(3):
                trial[q] = xyz[q]
            step = h * max(1.0, abs(xyz[k]))
            trial[k] += step
            build(trial, E)
            _constraints(E, rt)
            for m in range(10):
                J[m, k] = (rt[m] - r[m]) / step
        JtJ = np.zeros((3, 3))
        Jtr = np.zeros(3)
        for m in range(10):
            for a in range(3):
                Jtr[a] += J[m, a] * r[m]
                for b in range(3):
                    JtJ[a, b] += J[m, a] * J[m, b]
        det = _det3(JtJ)
        if abs(det) < 1e-300:
            break
        # Cramer's rule on the 3 x 3 normal equations
        for q in range(3):
            col = JtJ[:, q].copy()
            JtJ[:, q] = Jtr
            trial[q] = xyz[q] - _det3(JtJ) / det
            JtJ[:, q] = col
        build(trial, E)
        _constraints(E, rt)
        c2 = np.sum(rt * rt)
        if not c2 < cost:
            break
        cost = c2
        for q in range(3):
            xyz[q] = trial[q]
        for m in range(10):
            r[m] = rt[m]


@jit
def _five_point_from_basis(basis, out):
    """Essential matrices in the span of the four basis vectors.

    ``basis`` is 4 x 9 (column-major model vectors); solutions are written
    to ``out`` (10 x 3 x 3) with unit Frobenius norm.  Returns the count.
    """
    # lin[i, j] holds E[i, j] as a polynomial in (x, y, z, 1)
    lin = np.empty((3, 3, 4))
    for j in range(3):
        for i in range(3):
            for b in range(4):
                lin[i, j, b] = basis[b, 3 * j + i]

    EEt = np.zeros((3, 3, 10))
    for i in range(3):
        for j in range(i, 3):
            for k in range(3):
                _mul_ll(lin[i, k], lin[j, k], EEt[i, j], 1.0)
            if j != i:
                for c in range(10):
                    EEt[j, i, c] = EEt[i, j, c]
    tr = EEt[0, 0] + EEt[1, 1] + EEt[2, 2]

    coeffs = np.zeros((10, 20))
    for i in range(3):
        for j in range(3):
            row = coeffs[3 * i + j]
            for k in range(3):
                _mul_ql(EEt[i, k], lin[k, j], row, 2.0)
            _mul_ql(tr, lin[i, j], row, -1.0)
    minor = np.zeros(10)
    _mul_ll(lin[1, 1], lin[2, 2], minor, 1.0)
    _mul_ll(lin[1, 2], lin[2, 1], minor, -1.0)
    _mul_ql(minor, lin[0, 0], coeffs[9], 1.0)
    minor[:] = 0.0
    _mul_ll(lin[1, 0], lin[2, 2], minor, 1.0)
    _mul_ll(lin[1, 2], lin[2, 0], minor, -1.0)
    _mul_ql(minor, lin[0, 1], coeffs[9], -1.0)
    minor[:] = 0.0
    _mul_ll(lin[1, 0], lin[2, 1], minor, 1.0)
    _mul_ll(lin[1, 1], lin[2, 0], minor, -1.0)
    _mul_ql(minor, lin[0, 2], coeffs[9], 1.0)

    for r in range(10):
        s = np.max(np.abs(coeffs[r]))
        if s > 0.0:
            coeffs[r] /= s

    # Gauss-Jordan with partial pivoting on the first ten columns
    for c in range(10):
        piv = c
        best = abs(coeffs[c, c])
        for r in range(c + 1, 10):
            if abs(coeffs[r, c]) > best:
                best = abs(coeffs[r, c])
                piv = r
        if best < 1e-12:
            return 0
        if piv != c:
            for k in range(20):
                tmp = coeffs[c, k]
                coeffs[c, k] = coeffs[piv, k]
                coeffs[piv, k] = tmp
        inv = 1.0 / coeffs[c, c]
        for k in range(c, 20):
            coeffs[c, k] *= inv
        for r in range(10):
            if r != c and coeffs[r, c] != 0.0:
                f = coeffs[r, c]
                for k in range(c, 20):
                    coeffs[r, k] -= f * coeffs[c, k]

    # rows (4,5), (6,7), (8,9): <e> - z<f> etc. in the trailing monomials
    # [xz^2, xz, x, yz^2, yz, y, z^3, z^2, z, 1]
    B = np.zeros((3, 3, 5))
    for p in range(3):
        e = coeffs[4 + 2 * p, 10:]
        f = coeffs[5 + 2 * p, 10:]
        # x coefficient (degree 3 in z; stored in the last four slots)
        B[p, 0, 1] = -f[0]
        B[p, 0, 2] = e[0] - f[1]
        B[p, 0, 3] = e[1] - f[2]
        B[p, 0, 4] = e[2]
        B[p, 1, 1] = -f[3]
        B[p, 1, 2] = e[3] - f[4]
        B[p, 1, 3] = e[4] - f[5]
        B[p, 1, 4] = e[5]
        B[p, 2, 0] = -f[6]
        B[p, 2, 1] = e[6] - f[7]
        B[p, 2, 2] = e[7] - f[8]
        B[p, 2, 3] = e[8] - f[9]
        B[p, 2, 4] = e[9]

    k0 = B[0, 0, 1:]
    k1 = B[0, 1, 1:]
    k2 = B[0, 2]
    l0 = B[1, 0, 1:]
    l1 = B[1, 1, 1:]
    l2 = B[1, 2]
    m0 = B[2, 0, 1:]
    m1 = B[2, 1, 1:]
    m2 = B[2, 2]
    p1 = _poly_sub(_poly_mul(l1, m2), _poly_mul(l2, m1))
    p2 = _poly_sub(_poly_mul(l0, m2), _poly_mul(l2, m0))
    p3 = _poly_sub(_poly_mul(l0, m1), _poly_mul(l1, m0))
    det = _poly_sub(_poly_mul(k0, p1), _poly_mul(k1, p2))
    det = _poly_sub(det, -_poly_mul(k2, p3))

    roots = np.empty(10)
    nroots = real_roots(det, roots)
    count = 0
    Bz = np.empty((3, 3))
    E = np.empty((3, 3))
    xyz = np.empty(3)
    for r in range(nroots):
        z = roots[r]
        for p in range(3):
            for q in range(3):
                Bz[p, q] = _poly_eval(B[p, q], z)
        # (x, y, 1) spans the kernel of B(z); take the best-conditioned
        # cross product of two rows
        best = -1.0
        sx = 0.0
        sy = 0.0
        sw = 0.0
        for a in range(3):
            b = (a + 1) % 3
            cx = Bz[a, 1] * Bz[b, 2] - Bz[a, 2] * Bz[b, 1]
            cy = Bz[a, 2] * Bz[b, 0] - Bz[a, 0] * Bz[b, 2]
            cw = Bz[a, 0] * Bz[b, 1] - Bz[a, 1] * Bz[b, 0]
            nrm = cx * cx + cy * cy + cw * cw
            if nrm > best:
                best = nrm
                sx = cx
                sy = cy
                sw = cw
        if best <= 0.0 or abs(sw) <= 1e-12 * np.sqrt(best):
            continue
        xyz[0] = sx / sw
        xyz[1] = sy / sw
        xyz[2] = z
        _polish_xyz(basis, xyz)
        x, y, z = xyz[0], xyz[1], xyz[2]
        norm = 0.0
        for j in range(3):
            for i in range(3):
                v = (x * basis[0, 3 * j + i] + y * basis[1, 3 * j + i]
                     + z * basis[2, 3 * j + i] + basis[3, 3 * j + i])
                E[i, j] = v
                norm += v * v
        norm = np.sqrt(norm)
        if not norm > 0.0:
            continue
        for i in range(3):
            for j in range(3):
                E[i, j] /= norm
        if _essential_residual(E) > 1e-8 or abs(_det3(E)) > 1e-8:
            continue
        out[count] = E
        count += 1
    return count


@jit
def _five_point(x1, x2, out):
    """Five-point solver on normalized homogeneous points (5 x 3 each)."""
    A = _constraint_rows(x1, x2)
    basis = _nullspace(A, 4)
    return _five_point_from_basis(basis, out)


@jit
def _hartley(x):
    n = x.shape[0]
    cx = 0.0
    cy = 0.0
    for i in range(n):
        cx += x[i, 0]
        cy += x[i, 1]
    cx /= n
    cy /= n
    d = 0.0
    for i in range(n):
        d += np.sqrt((x[i, 0] - cx) ** 2 + (x[i, 1] - cy) ** 2)
    d /= n
    s = np.sqrt(2.0) / d if d > 0.0 else 1.0
    T = np.zeros((3, 3))
    T[0, 0] = s
    T[1, 1] = s
    T[0, 2] = -s * cx
    T[1, 2] = -s * cy
    T[2, 2] = 1.0
    y = np.empty((n, 3))
    for i in range(n):
        y[i, 0] = s * (x[i, 0] - cx)
        y[i, 1] = s * (x[i, 1] - cy)
        y[i, 2] = 1.0
    return y, T


@jit
def _det3(M):
    return (M[0, 0] * (M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
            - M[0, 1] * (M[1, 0] * M[2, 2] - M[1, 2] * M[2, 0])
            + M[0, 2] * (M[1, 0] * M[2, 1] - M[1, 1] * M[2, 0]))


@jit
def _det_cols(a0, a1, a2):
    M = np.empty((3, 3))
    M[:, 0] = a0
    M[:, 1] = a1
    M[:, 2] = a2
    return _det3(M)


@jit
def _seven_point(x1, x2, out):
    """Seven-point solver on homogeneous points (7 x 3 each, z = 1).

    Hartley-normalizes internally; writes up to three unit-norm rank-2
    fundamental matrices to ``out`` and returns the count.
    """
    y1, T1 = _hartley(x1)
    y2, T2 = _hartley(x2)
    A = _constraint_rows(y1, y2)
    basis = _nullspace(A, 2)
    F1 = np.empty((3, 3))
    F2 = np.empty((3, 3))
    for j in range(3):
        for i in range(3):
            F1[i, j] = basis[0, 3 * j + i]
            F2[i, j] = basis[1, 3 * j + i]
    # det(F2 + a (F1 - F2)) as a cubic in a
    D = F1 - F2
    c3 = _det3(D)
    c0 = _det3(F2)
    c1 = (_det_cols(D[:, 0], F2[:, 1], F2[:, 2]) + _det_cols(F2[:, 0], D[:, 1], F2[:, 2])
          + _det_cols(F2[:, 0], F2[:, 1], D[:, 2]))
    c2 = (_det_cols(F2[:, 0], D[:, 1], D[:, 2]) + _det_cols(D[:, 0], F2[:, 1], D[:, 2])
          + _det_cols(D[:, 0], D[:, 1], F2[:, 2]))
    cubic = np.array([c3, c2, c1, c0])
    roots = np.empty(3)
    nroots = real_roots(cubic, roots)
    count = 0
    for r in range(nroots):
        a = roots[r]
        Fn = F2 + a * D
        F = mm(mm(T2.T, Fn), T1)
        norm = np.sqrt(np.sum(F * F))
        if not norm > 0.0:
            continue
        out[count] = F / norm
        count += 1
    return count


def _as_homogeneous(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 2:
        x = np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)
    return np.ascontiguousarray(x)


def essential_5pt(x1, x2):
    """Essential matrices consistent with five normalized correspondences.

    ``x1``/``x2`` are 5 x 2 or 5 x 3 (z = 1) calibrated coordinates.  Returns
    up to ten unit-norm models; a degenerate sample yields an empty list.
    """
    x1 = _as_homogeneous(x1)
    x2 = _as_homogeneous(x2)
    if x1.shape != (5, 3) or x2.shape != (5, 3):
        raise ValueError("essential_5pt needs exactly five correspondences")
    out = np.empty((10, 3, 3))
    n = _five_point(x1, x2, out)
    return [EpipolarModel(out[i].copy(), ModelKind.ESSENTIAL) for i in range(n)]


def fundamental_7pt(p1, p2):
    """Fundamental matrices from seven pixel correspondences (at most three)."""
    p1 = _as_homogeneous(p1)
    p2 = _as_homogeneous(p2)
    if p1.shape != (7, 3) or p2.shape != (7, 3):
        raise ValueError("fundamental_7pt needs exactly seven correspondences")
    out = np.empty((3, 3, 3))
    n = _seven_point(p1, p2, out)
    return [EpipolarModel(out[i].copy(), ModelKind.FUNDAMENTAL) for i in range(n)]


def nullspace_from_summary(summary):
    """Orthonormal 4 x 9 basis of the approximate nullspace of a summary's M.

    Rows are the right singular vectors with the four smallest singular
    values, ordered from the fifth-smallest to the smallest.
    """
    M = np.asarray(getattr(summary, "M", summary), dtype=float)
    _, _, vt = np.linalg.svd(M)
    return np.ascontiguousarray(vt[5:])


def essential_from_summary(summary):
    """Run the five-point back-end on the summary's approximate nullspace."""
    basis = nullspace_from_summary(summary)
    out = np.empty((10, 3, 3))
    n = _five_point_from_basis(basis, out)
    return [EpipolarModel(out[i].copy(), ModelKind.ESSENTIAL) for i in range(n)]
