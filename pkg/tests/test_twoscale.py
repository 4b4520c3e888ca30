import math
import warnings

import numpy as np
import pytest

from memfront import evolve as E
from memfront import twoscale as TS
from memfront.errors import NotPositive, ResolutionError, ZeroWeight


def test_constant_coefficient_eigenvalues_discrete_and_continuum():
    N = 128
    basis = TS.sturm_solve(1.0, 1.0, N, 9)
    h = 1.0 / N
    for n in range(1, 10):
        m = n // 2
        discrete = 1.0 + 4.0 / h**2 * math.sin(math.pi * m * h) ** 2
        assert basis.lam[n - 1] == pytest.approx(discrete, rel=1e-11)
        # second-order error (pi m h)^2 / 3 relative to the continuum value
        rel = (math.pi * m * h) ** 2 / 3 * 1.05 + 1e-10
        assert basis.lam[n - 1] == pytest.approx(TS.torus_eigenvalue(n), rel=rel)


def test_modes_match_trig_functions():
    basis = TS.sturm_solve(1.0, 1.0, 64, 7)
    for n in range(1, 8):
        np.testing.assert_allclose(basis.psi[n - 1], TS.torus_mode(n, basis.y), atol=1e-9)


def test_torus_mode_orthonormal():
    y = np.arange(256) / 256
    G = np.array([[np.mean(TS.torus_mode(i, y) * TS.torus_mode(j, y)) for j in range(1, 8)]
                  for i in range(1, 8)])
    np.testing.assert_allclose(G, np.eye(7), atol=1e-12)
    with pytest.raises(ValueError):
        TS.torus_mode(0, y)


def test_variable_coefficient_basis():
    D_w = lambda y: 1.0 + 0.5 * np.sin(2 * np.pi * y)  # noqa: E731
    b = lambda y: 2.0 + np.cos(2 * np.pi * y)  # noqa: E731
    basis = TS.sturm_solve(D_w, b, 128, 128)
    np.testing.assert_allclose(basis.gram(), np.eye(128), atol=1e-10)
    assert basis.residuals().max() < 1e-6 * basis.lam.max()
    assert np.all(np.diff(basis.lam) >= -1e-9)
    assert basis.lam[0] > 0
    # spectral expansion reproduces the semigroup
    psi0 = np.exp(np.cos(2 * np.pi * basis.y))
    t = 0.05
    direct = TS.micro_semigroup(D_w, b, 128, psi0, t)
    expanded = basis.psi.T @ (np.exp(-basis.lam * t) * basis.project(psi0))
    np.testing.assert_allclose(expanded, direct, atol=1e-9)


def test_nonpositive_coefficients_rejected():
    with pytest.raises(NotPositive):
        TS.periodic_operator(lambda y: np.sin(2 * np.pi * y), 1.0, 32)
    with pytest.raises(NotPositive):
        TS.periodic_operator(1.0, 0.0, 32)


def test_example_weight_closed_form():
    # gamma = 1/lam_2 + 10/lam_4 with lam_n = 1 + (2 pi floor(n/2))^2
    lam2, lam4 = 1 + 4 * math.pi**2, 1 + 16 * math.pi**2
    expected = 1 / lam2 + 10 / lam4
    assert expected == pytest.approx(0.08763, abs=1e-5)
    prob = TS.homogenization_example(N_y=256)
    k = prob.kernel()
    assert k.gamma == pytest.approx(expected, rel=1e-3)
    assert prob.gamma() == pytest.approx(k.gamma, rel=1e-9)
    # two channels with weights 1 : 10
    assert len(k.rates) == 2
    order = np.argsort(k.rates)
    ratio = k.coeffs[order[1]] / k.coeffs[order[0]]
    assert ratio == pytest.approx(10.0, rel=1e-9)


def test_truncation_warns():
    basis = TS.sturm_solve(1.0, 1.0, 64, 3)
    alpha = TS.torus_mode(2, basis.y) + TS.torus_mode(6, basis.y)
    with pytest.warns(RuntimeWarning):
        TS.kernel_from_coupling(basis, alpha, TS.torus_mode(2, basis.y))


def test_orthogonal_coupling_has_zero_weight():
    basis = TS.sturm_solve(1.0, 1.0, 64, 16)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ZeroWeight):
            TS.kernel_from_coupling(basis, TS.torus_mode(2, basis.y), TS.torus_mode(6, basis.y))
    # the modal products themselves vanish
    prod = basis.coupling(TS.torus_mode(2, basis.y), TS.torus_mode(6, basis.y))
    assert np.max(np.abs(np.prod(prod, axis=0))) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 5])
def test_single_mode_coupling(n):
    basis = TS.sturm_solve(1.0, 1.0, 256, 64)
    psi = TS.torus_mode(n, basis.y)
    k = TS.kernel_from_coupling(basis, psi, psi)
    lam = TS.torus_eigenvalue(n)
    assert len(k.rates) == 1
    assert k.rates[0] == pytest.approx(lam, rel=1e-3)
    assert k.gamma == pytest.approx(1 / lam, rel=1e-3)


def test_decoupled_system_runs_local_front():
    prob = TS.homogenization_example(N_y=16)
    prob = TS.TwoScaleProblem(prob.F, prob.alpha, lambda y: 0.0 * y, 1.0, 1.0, 1.0, 16)
    res = TS.simulate_two_scale(prob, X=100.0, T_end=30.0, x0=70.0)
    assert np.max(np.abs(res.state.W)) < 1e-12
    local = E.run_to_front(prob.reduced(), None, X=100.0, T_end=30.0, x0=70.0)
    assert prob.gamma() == 0.0
    assert res.speed == pytest.approx(local.speed, abs=1e-2)
    assert res.speed == pytest.approx((2 * 0.25 - 1) / math.sqrt(2), abs=1e-2)


def test_constant_coefficients_match_two_scale_system():
    # with y-independent data the oscillating system differs only by eps^2 w_xx
    base = TS.homogenization_example(N_y=16)
    prob = TS.TwoScaleProblem(base.F, 0.2, 0.2, 1.0, 1.0, 1.0, 16)
    assert prob.gamma() == pytest.approx(0.04, rel=1e-12)
    limit = TS.simulate_two_scale(prob, X=100.0, dx=0.05, T_end=20.0, x0=50.0, out_every=5.0)
    res = TS.simulate_eps(0.25, prob, X=100.0, T_end=20.0)
    V = np.interp(res.x, limit.state.x - 50.0, limit.state.V)
    assert np.max(np.abs(res.v - V)) < 1e-2
    assert TS.oscillation_amplitude(res.x, res.v, 0.25, (5.0, 40.0)) < 1e-6

    prob = TS.homogenization_example(N_y=32)
    x = E.cell_grid(20.0, 0.1)
    V, W = TS.two_scale_initial(prob, x, 10.0)
    y, lower, diag, upper = prob.operator()
    LW = TS._dense(lower, diag, upper) @ W
    _, _, beta = prob.samples()
    np.testing.assert_allclose(LW, np.outer(beta, V), atol=1e-10)


def test_two_scale_matches_scalar_reduction_short():
    prob = TS.homogenization_example(N_y=32)
    res = TS.simulate_two_scale(prob, X=100.0, T_end=30.0, x0=70.0)
    red = E.run_to_front(prob.reduced(), prob.kernel(), X=100.0, T_end=30.0, x0=70.0)
    assert res.speed == pytest.approx(red.speed, abs=1e-4)
    assert res.max_mean_W < 1e-10
    assert res.speed < 0


def test_eps_resolution_guard():
    prob = TS.homogenization_example(N_y=32)
    with pytest.raises(ResolutionError):
        TS.simulate_eps(0.25, prob, dx=0.05)


def test_weighted_distance_closed_form():
    x = np.linspace(-400, 400, 200001)
    # int sech(|x| / R) dx over the line is pi R
    d = TS.weighted_distance(x, np.ones_like(x), np.zeros_like(x), R=10.0)
    assert d == pytest.approx(math.pi * 10.0, rel=1e-8)


def test_oscillation_amplitude_of_sine():
    eps = 0.5
    x = np.linspace(0, 20, 4001)
    f = 3.0 + 0.2 * np.sin(2 * np.pi * x / eps)
    assert TS.oscillation_amplitude(x, f, eps) == pytest.approx(0.2, rel=1e-2)
    assert TS.oscillation_amplitude(x, np.full_like(x, 3.0), eps) < 1e-12
