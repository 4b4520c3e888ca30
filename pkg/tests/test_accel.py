import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.linalg import solve_banded

from memfront import _accel as A

BACKENDS = [A.numpy_impl] + ([A.numba_impl] if A.HAVE_NUMBA else [])


def _bands(n, rng, periodic=False):
    lower = rng.uniform(-1, 0, n)
    upper = rng.uniform(-1, 0, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    if not periodic:
        lower[0] = upper[-1] = 0.0
    return lower, diag, upper


def _dense(lower, diag, upper, periodic):
    n = diag.size
    m = np.diag(diag)
    idx = np.arange(n)
    if periodic:
        m[idx, (idx - 1) % n] += lower
        m[idx, (idx + 1) % n] += upper
    else:
        m[idx[1:], idx[1:] - 1] = lower[1:]
        m[idx[:-1], idx[:-1] + 1] = upper[:-1]
    return m


@pytest.mark.parametrize("backend", BACKENDS)
def test_tridiagonal_solve(backend):
    rng = np.random.default_rng(0)
    lower, diag, upper = _bands(50, rng)
    rhs = rng.normal(size=50)
    x = A.Tridiagonal(lower, diag, upper, backend).solve(rhs)
    np.testing.assert_allclose(_dense(lower, diag, upper, False) @ x, rhs, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_cyclic_solve_columns(backend):
    rng = np.random.default_rng(1)
    lower, diag, upper = _bands(32, rng, periodic=True)
    rhs = rng.normal(size=(32, 7))
    X = A.CyclicTridiagonal(lower, diag, upper, backend).solve_columns(rhs)
    np.testing.assert_allclose(_dense(lower, diag, upper, True) @ X, rhs, atol=1e-12)


def test_cyclic_in_place_matches():
    rng = np.random.default_rng(2)
    lower, diag, upper = _bands(16, rng, periodic=True)
    rhs = rng.normal(size=(16, 5))
    for backend in BACKENDS:
        solver = A.CyclicTridiagonal(lower, diag, upper, backend)
        ref = solver.solve_columns(rhs.copy())
        buf = rhs.copy()
        out = solver.solve_columns(buf, out=buf)
        np.testing.assert_allclose(out, ref, atol=1e-13)


@pytest.mark.parametrize("backend", BACKENDS)
def test_history_sum(backend):
    rng = np.random.default_rng(3)
    buf = rng.normal(size=(20, 6))
    lags = np.array([0, 3, 7, 19], dtype=np.int64)
    w = rng.uniform(size=4)
    head = 5
    ref = sum(wj * buf[(head - lj) % 20] for wj, lj in zip(w, lags))
    np.testing.assert_allclose(A.history_sum(buf, head, lags, w, backend), ref, atol=1e-13)


@pytest.mark.skipif(not A.HAVE_NUMBA, reason="numba unavailable")
def test_backends_agree_on_banded_reference():
    rng = np.random.default_rng(4)
    lower, diag, upper = _bands(200, rng)
    rhs = rng.normal(size=200)
    ab = np.zeros((3, 200))
    ab[0, 1:], ab[1], ab[2, :-1] = upper[:-1], diag, lower[1:]
    ref = solve_banded((1, 1), ab, rhs)
    for backend in BACKENDS:
        np.testing.assert_allclose(A.Tridiagonal(lower, diag, upper, backend).solve(rhs), ref,
                                   atol=1e-12)


def test_env_flag_disables_numba():
    code = "from memfront import _accel; print(_accel.impl is _accel.numpy_impl)"
    env = dict(os.environ, MEMFRONT_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "True"


@pytest.mark.skipif(not A.HAVE_NUMBA, reason="numba unavailable")
def test_env_flag_default_uses_numba():
    code = "from memfront import _accel; print(_accel.impl is _accel.numba_impl)"
    env = {k: v for k, v in os.environ.items() if k != "MEMFRONT_NUMBA"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "True"
