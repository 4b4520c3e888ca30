import json
import math

import numpy as np
import pytest
from scipy.integrate import solve_bvp

from memfront import bistable as B
from memfront import kernels as K
from memfront import twfront as T
from memfront.errors import DomainTooSmall, MonotonicityViolation

SQDIFF = K.from_pde_ode([(1, 1, 2), (-2, 1, 3), (1, 1, 4)])


def bvp_speed(p, kernel, v, L=30.0):
    """Independent speed of the auxiliary front for an exponential-sum kernel.

    ``w_i(xi) = int exp(-lam_i tau) U(xi + v tau) dtau`` obeys
    ``v w_i' = lam_i w_i - U``, giving a local ODE system solved as a
    two-sided boundary value problem with the phase ``U(0) = u_mid``.
    """
    lo, mid, hi = p.roots
    c_i, lam = np.asarray(kernel.coeffs), np.asarray(kernel.rates)
    m = lam.size
    nv = 2 + m

    def f1(y, c):
        U, Up, w = y[0], y[1], y[2:]
        mem = c_i @ w
        return np.vstack([Up, (-c * Up - p.F(U) - p.gamma * mem) / p.D,
                          (lam[:, None] * w - U) / v])

    def f(s, y, prm):
        return L * np.vstack([f1(y[:nv], prm[0]), f1(y[nv:], prm[0])])

    def bc(ya, yb, prm):
        if v > 0:
            wbc = yb[nv + 2:] - hi / lam
        else:
            wbc = ya[2:nv] - lo / lam
        return np.concatenate([[ya[0] - lo, yb[nv] - hi], wbc, yb[:nv] - ya[nv:],
                               [yb[0] - mid]])

    s = np.linspace(0, 1, 401)
    kap = (hi - lo) / math.sqrt(2 * p.D)

    def prof(x):
        U = lo + (hi - lo) / (1 + np.exp(-kap * x))
        return np.vstack([U, kap * (U - lo) * (hi - U) / (hi - lo)] + [U / r for r in lam])

    y0 = np.vstack([prof(-L + L * s), prof(L * s)])
    r = solve_bvp(f, bc, s, y0, p=[B.local_cubic_speed(p)], tol=1e-9, max_nodes=200000)
    assert r.success, r.message
    return float(r.p[0])


def test_no_memory_matches_explicit_front():
    p = B.BistableProblem.cubic(0.6)
    sol = T.solve_profile(p, K.exponential(), 0.3)
    assert sol.speed == pytest.approx((2 * 0.6 - 1) / math.sqrt(2), abs=1e-5)
    # explicit profile 1 / (1 + exp(-xi / sqrt 2)) through 0.6 at xi = 0
    x0 = -math.sqrt(2) * math.log(1 / 0.6 - 1)
    ref = 1 / (1 + np.exp(-(sol.xi + x0) / math.sqrt(2)))
    assert np.max(np.abs(sol.profile - ref)) < 1e-4
    assert sol.connects == pytest.approx((0.0, 1.0))


@pytest.mark.parametrize("beta", [-0.05, -0.02, 0.02])
def test_zero_auxiliary_speed_is_local_speed(beta):
    p = B.BistableProblem.cubic(0.6, beta)
    sol = T.solve_profile(p, K.exponential(), 0.0)
    assert sol.speed == pytest.approx(B.mckean_speed(0.6, beta), abs=1e-5)


@pytest.mark.parametrize("beta, v, kernel", [
    (-0.05, 0.5, K.exponential()),
    (-0.05, -0.5, K.exponential()),
    (-0.05, 2.0, K.exponential()),
    (-0.02, 0.3, K.exponential(2.0)),
    (-0.05, 0.4, SQDIFF),
    (-0.05, -0.4, SQDIFF),
])
def test_speed_matches_ode_oracle(beta, v, kernel):
    p = B.BistableProblem.cubic(0.6, beta)
    c = T.solve_profile(p, kernel, v).speed
    assert c == pytest.approx(bvp_speed(p, kernel, v), abs=1e-5)


def test_second_order_convergence():
    p = B.BistableProblem.cubic(0.6, -0.05)
    ref = bvp_speed(p, K.exponential(), 0.5)
    e1 = abs(T.solve_profile(p, K.exponential(), 0.5, h=0.1).speed - ref)
    e2 = abs(T.solve_profile(p, K.exponential(), 0.5, h=0.05).speed - ref)
    assert e2 < e1 / 3


def test_speed_independent_of_initial_shift():
    p = B.BistableProblem.cubic(0.6, -0.05)
    c1 = T.solve_profile(p, K.exponential(), 0.4).speed
    c2 = T.solve_profile(p, K.exponential(), 0.4, shift=3.0).speed
    assert c1 == pytest.approx(c2, abs=1e-8)


def test_reflection_symmetry():
    p = B.BistableProblem.cubic(0.6, -0.03)
    q = B.reflected(p)
    c = T.solve_profile(p, K.exponential(), 0.3).speed
    cq = T.solve_profile(q, K.exponential(), -0.3).speed
    assert cq == pytest.approx(-c, abs=1e-7)


def test_profile_monotone_and_connects():
    p = B.BistableProblem.cubic(0.6, -0.05)
    sol = T.solve_profile(p, K.exponential(), -0.25)
    assert sol.is_monotone(T.MONO_TOL)
    assert sol.diagnostics["monotone"]
    assert sol.profile[0] == pytest.approx(0.0, abs=1e-6)
    assert sol.profile[-1] == pytest.approx(p.roots[2], abs=1e-6)
    assert sol.residual_norm < 1e-8


def test_domain_too_small():
    p = B.BistableProblem.cubic(0.6, -0.05)
    with pytest.raises(DomainTooSmall):
        T.solve_profile(p, K.exponential(), 0.5, L=4.0)


def test_unknown_option_rejected():
    p = B.BistableProblem.cubic(0.6)
    with pytest.raises(TypeError):
        T.solve_profile(p, K.exponential(), 0.0, grid=3)


def test_shift_matrix_rows_sum_to_one_and_shift_linear_data():
    n, h = 601, 0.05
    for v in (0.7, -0.7):
        S = T.shift_matrix(K.exponential(), v, n, h)
        np.testing.assert_allclose(np.asarray(S.sum(axis=1)).ravel(), 1.0, atol=1e-12)
        xi = np.arange(n) * h
        # linear U: int e^{-tau} (xi + v tau) dtau = xi + v, away from the clamped end
        out = S @ xi
        inner = slice(0, 50) if v > 0 else slice(n - 50, n)
        np.testing.assert_allclose(out[inner], xi[inner] + v, atol=1e-9)


def test_speed_curve_monotone():
    p = B.BistableProblem.cubic(0.6, -0.05)
    curve = T.speed_curve(p, K.exponential(), [0.5, -0.5, 0.0])
    vs, cs = zip(*curve)
    assert vs == (0.5, -0.5, 0.0)
    assert cs[1] >= cs[2] >= cs[0]


def test_speed_curve_detects_violation(monkeypatch):
    p = B.BistableProblem.cubic(0.6, -0.05)
    real = T.solve_profile

    def flipped(p, kernel, v, **kw):
        sol = real(p, kernel, v, **kw)
        sol.speed = -sol.speed
        return sol

    monkeypatch.setattr(T, "solve_profile", flipped)
    with pytest.raises(MonotonicityViolation):
        T.speed_curve(p, K.exponential(), [-0.5, 0.5])


def test_fixed_point_residual_and_sandwich():
    p = B.BistableProblem.cubic(0.6, -0.05)
    sol = T.solve_fixed_point(p, K.exponential())
    assert sol.diagnostics["fp_residual"] < 1e-6
    assert sol.diagnostics["sandwich_ok"]
    c0 = sol.diagnostics["C0"]
    assert c0 < sol.speed < 0
    # independent check of the fixed point with the ODE oracle
    assert bvp_speed(p, K.exponential(), sol.v) == pytest.approx(sol.v, abs=1e-5)


def test_fixed_point_without_memory():
    p = B.BistableProblem.cubic(0.6)
    sol = T.solve_fixed_point(p, K.exponential())
    assert sol.speed == pytest.approx(B.mckean_speed(0.6, 0.0), abs=1e-5)
    assert sol.diagnostics["fp_residual"] == 0.0


def test_to_csv(tmp_path):
    p = B.BistableProblem.cubic(0.6, -0.05)
    sol = T.solve_profile(p, K.exponential(), 0.2)
    path = sol.to_csv(tmp_path / "front.csv", {"a": 0.6})
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (sol.xi.size, 2)
    meta = json.loads(path.with_suffix(".json").read_text())
    assert meta["speed"] == pytest.approx(sol.speed)
    assert meta["params"] == {"a": 0.6}


def test_symmetric_cubic_standing_wave():
    p = B.BistableProblem.cubic(0.5)
    for v in (0.0, 0.4):
        assert abs(T.solve_profile(p, K.exponential(), v).speed) < 1e-6


def test_speed_inside_bounds_small_memory():
    p = B.BistableProblem.cubic(0.6, -0.01)
    lo, hi = B.speed_bounds(p, B.estimate_params(p), K.exponential(), 0.0)
    c = T.solve_profile(p, K.exponential(), 0.0).speed
    assert lo <= c <= hi
    # at v = 0 the memory term is gamma U, so this is the tilted local speed
    assert c == pytest.approx(B.mckean_speed(0.6, -0.01), abs=1e-5)


def test_speed_curve_constant_without_memory():
    p = B.BistableProblem.cubic(0.6)
    cs = [c for _, c in T.speed_curve(p, K.exponential(), [-1.0, -0.2, 0.0, 0.3, 1.0])]
    assert max(cs) - min(cs) < 1e-10


def test_speed_curve_refinement():
    # continuity: midpoints of a coarse v-grid match linear interpolation
    p = B.BistableProblem.cubic(0.6, -0.05)
    coarse = [-0.5, -0.25, 0.0, 0.25, 0.5]
    fine = np.linspace(-0.5, 0.5, 9)
    cc = np.array([c for _, c in T.speed_curve(p, K.exponential(), coarse)])
    cf = np.array([c for _, c in T.speed_curve(p, K.exponential(), list(fine))])
    np.testing.assert_allclose(cf[::2], cc, atol=1e-10)
    np.testing.assert_allclose(cf[1::2], 0.5 * (cc[:-1] + cc[1:]), atol=1e-3)


def test_fixed_point_bisection_agrees_with_brent():
    p = B.BistableProblem.cubic(0.6, -0.05)
    a = T.solve_fixed_point(p, K.exponential(), method="brent")
    b = T.solve_fixed_point(p, K.exponential(), method="bisect")
    assert b.diagnostics["fp_residual"] < 1e-6
    assert a.speed == pytest.approx(b.speed, abs=1e-6)
    with pytest.raises(ValueError):
        T.solve_fixed_point(p, K.exponential(), method="newton")


def test_fixed_point_sandwich_against_local_speed():
    # the memory front lies between the local speed and zero
    p = B.BistableProblem.cubic(0.6, -0.05)
    c = T.solve_fixed_point(p, K.exponential()).speed
    assert B.mckean_speed(0.6, -0.05) <= c <= 0


def test_fixed_point_without_memory_fine_grid():
    # at h = 0.025 the O(h^2) discretization error drops below the fixed-point tolerance
    p = B.BistableProblem.cubic(0.6)
    sol = T.solve_fixed_point(p, K.exponential(), h=0.025)
    assert abs(sol.speed - B.mckean_speed(0.6, 0.0)) < 1e-6
    assert sol.diagnostics["evaluations"] == 1


def test_deep_regime_fixed_point():
    p = B.BistableProblem.cubic(0.6, -5.0)
    sol = T.solve_fixed_point(p, K.exponential())
    c_local = B.local_cubic_speed(p)
    assert min(c_local, 0.0) <= sol.speed <= max(c_local, 0.0)
    assert sol.diagnostics["sandwich_ok"]
