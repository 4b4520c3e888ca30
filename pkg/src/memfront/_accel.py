"""Hot inner kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``MEMFRONT_NUMBA`` is not set
to ``0``.  Both paths are always importable as ``numpy_impl`` / ``numba_impl``
so tests and the benchmark can compare them directly.
"""

import os
from types import SimpleNamespace

import numpy as np
from scipy.linalg import solve_banded

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("MEMFRONT_NUMBA", "1") != "0"


# ---------------------------------------------------------------- numpy path

def _np_tridiag_factor(lower, diag, upper):
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return ab


def _np_tridiag_solve(factor, rhs):
    return solve_banded((1, 1), factor, rhs, check_finite=False)


def _np_history_sum(buf, head, lags, weights):
    rows = (head - lags) % buf.shape[0]
    return weights @ buf[rows]


def _np_cyclic_factor(lower, diag, upper):
    n = diag.size
    m = np.diag(diag)
    idx = np.arange(n)
    m[idx, (idx - 1) % n] += lower
    m[idx, (idx + 1) % n] += upper
    return np.linalg.inv(m)


def _np_cyclic_solve_columns(factor, rhs, out):
    np.matmul(factor, rhs, out=out)
    return out


numpy_impl = SimpleNamespace(
    tridiag_factor=_np_tridiag_factor,
    tridiag_solve=_np_tridiag_solve,
    history_sum=_np_history_sum,
    cyclic_factor=_np_cyclic_factor,
    cyclic_solve_columns=_np_cyclic_solve_columns,
)


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _thomas_factor(lower, diag, upper):
        n = diag.size
        cp = np.empty(n)
        inv = np.empty(n)
        inv[0] = 1.0 / diag[0]
        cp[0] = upper[0] * inv[0]
        for i in range(1, n):
            inv[i] = 1.0 / (diag[i] - lower[i] * cp[i - 1])
            cp[i] = upper[i] * inv[i]
        return cp, inv

    @njit(cache=True)
    def _thomas_solve(lower, cp, inv, rhs, out):
        n = rhs.size
        out[0] = rhs[0] * inv[0]
        for i in range(1, n):
            out[i] = (rhs[i] - lower[i] * out[i - 1]) * inv[i]
        for i in range(n - 2, -1, -1):
            out[i] -= cp[i] * out[i + 1]

    def _nb_tridiag_factor(lower, diag, upper):
        lower = np.ascontiguousarray(lower, dtype=np.float64)
        cp, inv = _thomas_factor(lower, np.asarray(diag, np.float64),
                                 np.asarray(upper, np.float64))
        return lower, cp, inv

    def _nb_tridiag_solve(factor, rhs):
        lower, cp, inv = factor
        out = np.empty_like(rhs, dtype=np.float64)
        _thomas_solve(lower, cp, inv, np.ascontiguousarray(rhs, np.float64), out)
        return out

    @njit(cache=True)
    def _history_sum_kernel(buf, head, lags, weights, out):
        nrow = buf.shape[0]
        n = buf.shape[1]
        for i in range(n):
            out[i] = 0.0
        for j in range(lags.size):
            r = (head - lags[j]) % nrow
            w = weights[j]
            for i in range(n):
                out[i] += w * buf[r, i]

    def _nb_history_sum(buf, head, lags, weights):
        out = np.empty(buf.shape[1])
        _history_sum_kernel(buf, head, lags, weights, out)
        return out

    @njit(cache=True)
    def _cyclic_columns_kernel(lower, cp, inv, u, corr, beta, gam, rhs, out):
        # Sherman-Morrison on a periodic tridiagonal system acting along axis 0;
        # the inner loops run over contiguous columns
        n, ncols = rhs.shape
        for k in range(ncols):
            out[0, k] = rhs[0, k] * inv[0]
        for i in range(1, n):
            li = lower[i]
            vi = inv[i]
            for k in range(ncols):
                out[i, k] = (rhs[i, k] - li * out[i - 1, k]) * vi
        for i in range(n - 2, -1, -1):
            ci = cp[i]
            for k in range(ncols):
                out[i, k] -= ci * out[i + 1, k]
        fac = np.empty(ncols)
        for k in range(ncols):
            fac[k] = (out[0, k] + beta * out[n - 1, k] / gam) * corr
        for i in range(n):
            ui = u[i]
            for k in range(ncols):
                out[i, k] -= fac[k] * ui

    def _nb_cyclic_factor(lower, diag, upper):
        lower = np.asarray(lower, np.float64).copy()
        diag = np.asarray(diag, np.float64).copy()
        upper = np.asarray(upper, np.float64).copy()
        n = diag.size
        alpha = upper[-1]  # A[n-1, 0]
        beta = lower[0]  # A[0, n-1]
        gam = -diag[0]
        bb = diag.copy()
        bb[0] -= gam
        bb[-1] -= alpha * beta / gam
        lo = lower.copy()
        lo[0] = 0.0
        up = upper.copy()
        up[-1] = 0.0
        cp, inv = _thomas_factor(lo, bb, up)
        rhs_u = np.zeros(n)
        rhs_u[0] = gam
        rhs_u[-1] = alpha
        z = np.empty(n)
        _thomas_solve(lo, cp, inv, rhs_u, z)
        corr = 1.0 / (1.0 + z[0] + beta * z[-1] / gam)
        return lo, cp, inv, z, corr, alpha, beta, gam

    def _nb_cyclic_solve_columns(factor, rhs, out):
        lo, cp, inv, z, corr, alpha, beta, gam = factor
        _cyclic_columns_kernel(lo, cp, inv, z, corr, beta, gam, rhs, out)
        return out

    numba_impl = SimpleNamespace(
        tridiag_factor=_nb_tridiag_factor,
        tridiag_solve=_nb_tridiag_solve,
        history_sum=_nb_history_sum,
        cyclic_factor=_nb_cyclic_factor,
        cyclic_solve_columns=_nb_cyclic_solve_columns,
    )
else:  # pragma: no cover
    numba_impl = None


impl = numba_impl if USE_NUMBA else numpy_impl


class Tridiagonal:
    """Factorized tridiagonal matrix ``lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]``.

    ``lower[0]`` and ``upper[-1]`` are ignored.
    """

    def __init__(self, lower, diag, upper, backend=None):
        self.backend = backend or impl
        self._factor = self.backend.tridiag_factor(
            np.asarray(lower, float), np.asarray(diag, float), np.asarray(upper, float))

    def solve(self, rhs):
        return self.backend.tridiag_solve(self._factor, rhs)


class CyclicTridiagonal:
    """Periodic tridiagonal matrix solved independently for every column of a 2-D array.

    ``lower[0]`` couples row 0 to the last unknown and ``upper[-1]`` couples the
    last row to unknown 0.
    """

    def __init__(self, lower, diag, upper, backend=None):
        self.backend = backend or impl
        self._factor = self.backend.cyclic_factor(
            np.asarray(lower, float), np.asarray(diag, float), np.asarray(upper, float))

    def solve_columns(self, rhs, out=None):
        """Solve ``A X = rhs`` for ``rhs`` of shape ``(n, ncols)``; ``out`` may alias ``rhs``
        on the numba path only."""
        rhs = np.ascontiguousarray(rhs, dtype=np.float64)
        if out is None or (out is rhs and self.backend is numpy_impl):
            out = np.empty_like(rhs)
        return self.backend.cyclic_solve_columns(self._factor, rhs, out)


def history_sum(buf, head, lags, weights, backend=None):
    """Weighted sum ``sum_j weights[j] * buf[(head - lags[j]) % nrow]``."""
    return (backend or impl).history_sum(buf, head, lags, weights)
