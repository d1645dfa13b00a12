"""Real roots of small univariate polynomials via Sturm sequences.

Coefficients are stored in descending order: ``c[0] * z**n + ... + c[n]``.
"""

import numpy as np

from ._jit import jit

MAX_DEGREE = 10


@jit
def _horner(c, n, z):
    v = c[0]
    for i in range(1, n + 1):
        v = v * z + c[i]
    return v


@jit
def _horner_deriv(c, n, z):
    v = c[0]
    d = 0.0
    for i in range(1, n + 1):
        d = d * z + v
        v = v * z + c[i]
    return v, d


@jit
def _sign_changes(seq, degs, nseq, z):
    count = 0
    prev = 0.0
    for k in range(nseq):
        v = _horner(seq[k], degs[k], z)
        if v != 0.0:
            if prev != 0.0 and (v > 0.0) != (prev > 0.0):
                count += 1
            prev = v
    return count


@jit
def _build_sturm(p, n, seq, degs):
    """Fill ``seq`` with the Sturm chain of the monic polynomial ``p``."""
    for i in range(n + 1):
        seq[0, i] = p[i]
    degs[0] = n
    for i in range(n):
        seq[1, i] = p[i] * (n - i) / n
    degs[1] = n - 1
    nseq = 2
    rem = np.empty(MAX_DEGREE + 1)
    while degs[nseq - 1] > 0:
        a = seq[nseq - 2]
        b = seq[nseq - 1]
        da = degs[nseq - 2]
        db = degs[nseq - 1]
        for i in range(da + 1):
            rem[i] = a[i]
        # long division; the quotient is not needed
        for i in range(da - db + 1):
            q = rem[i] / b[0]
            for j in range(db + 1):
                rem[i + j] -= q * b[j]
        scale = 0.0
        for i in range(da + 1):
            scale = max(scale, abs(a[i]))
        dr = db - 1
        while dr >= 0 and abs(rem[da - dr]) <= 1e-14 * scale:
            dr -= 1
        if dr < 0:
            break
        start = da - dr
        inv = -1.0 / abs(rem[start])
        for i in range(dr + 1):
            seq[nseq, i] = rem[start + i] * inv
        degs[nseq] = dr
        nseq += 1
    return nseq


@jit
def _polish(c, n, lo, hi):
    flo = _horner(c, n, lo)
    fhi = _horner(c, n, hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0.0) == (fhi > 0.0):
        # no sign change: a double root or a miscounted chain; the caller
        # falls back to eigenvalues
        return np.nan
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f, d = _horner_deriv(c, n, x)
        if f == 0.0:
            return x
        if (f > 0.0) == (flo > 0.0):
            lo = x
        else:
            hi = x
        step_ok = False
        if d != 0.0:
            xn = x - f / d
            if lo < xn < hi:
                step_ok = True
        if not step_ok:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 4e-16 * max(1.0, abs(x)):
            return xn
        x = xn
        if hi - lo <= 4e-16 * max(1.0, abs(x)):
            return x
    return x


@jit
def _is_root(p, n, x):
    """|p(x)| small against the size of its terms (rounding-level residual)."""
    v = p[0]
    size = abs(p[0])
    ax = abs(x)
    for i in range(1, n + 1):
        v = v * x + p[i]
        size = size * ax + abs(p[i])
    return abs(v) <= 1e-7 * size


@jit
def _eig_roots(p, n, out):
    """Real roots from the companion matrix eigenvalues, Newton-polished."""
    C = np.zeros((n, n))
    for i in range(n):
        C[0, i] = -p[i + 1]
    for i in range(1, n):
        C[i, i - 1] = 1.0
    ev = np.linalg.eigvals(C.astype(np.complex128))
    count = 0
    for k in range(n):
        z = ev[k]
        if abs(z.imag) > 1e-6 * max(1.0, abs(z.real)):
            continue
        x = z.real
        for _ in range(8):
            f, d = _horner_deriv(p, n, x)
            if d == 0.0:
                break
            step = f / d
            x -= step
            if abs(step) <= 1e-15 * max(1.0, abs(x)):
                break
        if count < out.shape[0]:
            out[count] = x
            count += 1
    # ascending order, like the Sturm path
    for i in range(1, count):
        v = out[i]
        j = i - 1
        while j >= 0 and out[j] > v:
            out[j + 1] = out[j]
            j -= 1
        out[j + 1] = v
    return count


@jit
def real_roots(coeffs, out):
    """Write the distinct real roots of ``coeffs`` into ``out``; return the count.

    Roots are isolated with a Sturm chain and polished.  For badly scaled
    polynomials the chain can miscount; if any returned value is not a root
    the companion-matrix eigenvalues are used instead.
    """
    m = coeffs.shape[0] - 1
    scale = 0.0
    for i in range(m + 1):
        scale = max(scale, abs(coeffs[i]))
    if scale == 0.0:
        return 0
    start = 0
    # drop only negligible leading terms: roots near 100 already spread a
    # degree-ten polynomial's coefficients over twenty orders of magnitude
    while start < m and abs(coeffs[start]) <= 1e-24 * scale:
        start += 1
    n = m - start
    if n == 0:
        return 0
    p = np.empty(n + 1)
    for i in range(n + 1):
        p[i] = coeffs[start + i] / coeffs[start]
    if n == 1:
        out[0] = -p[1]
        return 1

    bound = 0.0
    for i in range(1, n + 1):
        bound = max(bound, abs(p[i]))
    bound = 1.0 + bound

    seq = np.zeros((MAX_DEGREE + 1, MAX_DEGREE + 1))
    degs = np.zeros(MAX_DEGREE + 1, dtype=np.int64)
    nseq = _build_sturm(p, n, seq, degs)

    stack_lo = np.empty(64)
    stack_hi = np.empty(64)
    stack_vlo = np.empty(64, dtype=np.int64)
    stack_vhi = np.empty(64, dtype=np.int64)
    top = 0
    stack_lo[0] = -bound
    stack_hi[0] = bound
    stack_vlo[0] = _sign_changes(seq, degs, nseq, -bound)
    stack_vhi[0] = _sign_changes(seq, degs, nseq, bound)
    top = 1
    count = 0
    while top > 0:
        top -= 1
        lo = stack_lo[top]
        hi = stack_hi[top]
        vlo = stack_vlo[top]
        vhi = stack_vhi[top]
        nroots = vlo - vhi
        if nroots <= 0:
            continue
        if nroots == 1 or hi - lo <= 1e-12 * max(1.0, abs(lo)) or top >= 62:
            if count < out.shape[0]:
                out[count] = _polish(p, n, lo, hi)
                count += 1
            continue
        mid = 0.5 * (lo + hi)
        vmid = _sign_changes(seq, degs, nseq, mid)
        # upper half first so roots come out in ascending order
        stack_lo[top] = mid
        stack_hi[top] = hi
        stack_vlo[top] = vmid
        stack_vhi[top] = vhi
        top += 1
        stack_lo[top] = lo
        stack_hi[top] = mid
        stack_vlo[top] = vlo
        stack_vhi[top] = vmid
        top += 1
    for i in range(count):
        if not (np.isfinite(out[i]) and _is_root(p, n, out[i])):
            return _eig_roots(p, n, out)
    return count
