"""Shared numba configuration for the compiled kernels."""

import numba
import numpy as np

# No nnan/ninf: degenerate denominators must propagate as inf.
FAST = {"reassoc", "contract", "arcp", "nsz"}


def jit(fn=None, *, fast=False):
    opts = dict(cache=True, nogil=True, error_model="numpy")
    if fast:
        opts["fastmath"] = FAST
    if fn is None:
        return numba.njit(**opts)
    return numba.njit(**opts)(fn)


# Small dense products written as loops: numba sends ``@`` to BLAS, whose
# call overhead dwarfs the arithmetic for 3 x 3 and 9 x 9 operands.

@jit
def mm(A, B):
    n, k = A.shape
    m = B.shape[1]
    C = np.zeros((n, m))
    for i in range(n):
        for p in range(k):
            a = A[i, p]
            for j in range(m):
                C[i, j] += a * B[p, j]
    return C


@jit
def mv(A, x):
    n, k = A.shape
    y = np.zeros(n)
    for i in range(n):
        s = 0.0
        for p in range(k):
            s += A[i, p] * x[p]
        y[i] = s
    return y


@jit
def mtv(A, x):
    """``A.T @ x``."""
    n, k = A.shape
    y = np.zeros(k)
    for p in range(n):
        xp = x[p]
        for i in range(k):
            y[i] += A[p, i] * xp
    return y
