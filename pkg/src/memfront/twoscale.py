"""Two-scale FitzHugh-Nagumo system and its scalar memory reduction.

The macroscopic field ``V(t, x)`` couples locally in ``x`` to a microscopic
field ``W(t, x, y)`` on the unit torus,

    V_t = D_eff V_xx + F(V) + int alpha(y) W dy,
    W_t = (D_w(y) W_y)_y - b(y) W + beta(y) V.

Eliminating ``W`` gives the memory equation with kernel
``sum_n exp(-lam_n tau) a_n b_n``, where ``(lam_n, psi_n)`` are the eigenpairs of
``L psi = -(D_w psi')' + b psi`` and ``a_n, b_n`` the coefficients of ``alpha, beta``.
"""

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, linalg

from . import _accel
from .bistable import BistableProblem
from .errors import (FrontExited, NaNDetected, NoCrossing, NotPositive, ResolutionError,
                     StabilityViolation)
from .evolve import (STABILITY_FACTOR, cell_grid, fit_speed, front_initial,
                     front_position, neumann_laplacian)
from .kernels import from_pde_ode

DEGENERACY_TOL = 1e-8


# ---------------------------------------------------------------- eigenbasis

def _sample(f, y):
    if callable(f):
        return np.broadcast_to(np.asarray(f(y), float), y.shape).copy()
    return np.full(y.shape, float(f))


def periodic_operator(D_w, b, N_y):
    """Bands of ``L = -(D_w psi')' + b psi`` on ``N_y`` torus points (conservative form).

    Returns ``(y, lower, diag, upper)``; ``lower[0]`` and ``upper[-1]`` are the wrap terms.
    """
    h = 1.0 / N_y
    y = np.arange(N_y) * h
    d_face = _sample(D_w, y + 0.5 * h)  # D at y_{j+1/2}
    bb = _sample(b, y)
    if np.any(d_face <= 0) or np.any(_sample(D_w, y) <= 0):
        raise NotPositive("microscopic diffusion must be strictly positive")
    if np.any(bb <= 0):
        raise NotPositive("damping coefficient must be strictly positive")
    d_left = np.roll(d_face, 1)  # D at y_{j-1/2}
    diag = (d_face + d_left) / h**2 + bb
    upper = -d_face / h**2
    lower = -d_left / h**2
    return y, lower, diag, upper


def _dense(lower, diag, upper):
    n = diag.size
    m = np.diag(diag)
    idx = np.arange(n)
    m[idx, (idx - 1) % n] += lower
    m[idx, (idx + 1) % n] += upper
    return m


def _orient(psi, y):
    """Fix the sign: positive at ``y = 0``, or positive slope there if it vanishes."""
    if abs(psi[0]) > 1e-8 * np.abs(psi).max():
        return psi if psi[0] > 0 else -psi
    slope = psi[1] - psi[-1]
    return psi if slope > 0 else -psi


def torus_mode(n, y):
    """Eigenfunctions of ``-psi'' + psi``: ``1``, then ``sqrt2 sin(2 pi m y)`` (n = 2m) and
    ``sqrt2 cos(2 pi m y)`` (n = 2m + 1); ``n`` starts at 1."""
    y = np.asarray(y, float)
    if n < 1:
        raise ValueError("modes are numbered from 1")
    if n == 1:
        return np.ones_like(y)
    m = n // 2
    trig = np.sin if n % 2 == 0 else np.cos
    return math.sqrt(2.0) * trig(2.0 * math.pi * m * y)


def torus_eigenvalue(n, D=1.0, b=1.0):
    return b + D * (2.0 * math.pi * (n // 2)) ** 2


@dataclass
class SturmBasis:
    """Eigenpairs of the periodic Sturm-Liouville operator, orthonormal in ``h sum psi^2``."""

    y: np.ndarray
    lam: np.ndarray
    psi: np.ndarray  # shape (n_modes, N_y)
    matrix: np.ndarray = field(repr=False)

    @property
    def h(self):
        return 1.0 / self.y.size

    def inner(self, f, g):
        return self.h * np.dot(f, g)

    def project(self, f):
        """Coefficients ``<f, psi_n>`` of a function or sample vector."""
        fv = f if isinstance(f, np.ndarray) else _sample(f, self.y)
        return self.h * (self.psi @ fv)

    def coupling(self, alpha, beta):
        return self.project(alpha), self.project(beta)

    def gram(self):
        return self.h * (self.psi @ self.psi.T)

    def residuals(self):
        """Max-norm of ``L psi_n - lam_n psi_n`` for every mode."""
        r = self.psi @ self.matrix.T - self.lam[:, None] * self.psi
        return np.abs(r).max(axis=1)

    def to_csv(self, path, alpha=None, beta=None):
        n = np.arange(1, self.lam.size + 1)
        cols, header = [n, self.lam], ["n", "lambda"]
        if alpha is not None and beta is not None:
            a, b = self.coupling(alpha, beta)
            cols += [a, b]
            header += ["a", "b"]
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header),
                   comments="", fmt="%.15g")
        return path


def sturm_solve(D_w=1.0, b=1.0, N_y=256, n_modes=64):
    """Eigenpairs of ``-(D_w psi')' + b psi`` on the torus by finite differences.

    Degenerate pairs are rotated so the first member vanishes at ``y = 0``
    with positive slope (sine-like) and the second is positive there
    (cosine-like), matching :func:`torus_mode` for constant coefficients.
    """
    y, lower, diag, upper = periodic_operator(D_w, b, N_y)
    mat = _dense(lower, diag, upper)
    mat = 0.5 * (mat + mat.T)
    lam, vec = linalg.eigh(mat)
    n_modes = min(n_modes, N_y)
    psi = vec.T * math.sqrt(N_y)  # h sum psi^2 = 1
    out = []
    i = 0
    while i < N_y and len(out) < n_modes + 1:
        if i + 1 < N_y and abs(lam[i + 1] - lam[i]) <= DEGENERACY_TOL * max(1.0, abs(lam[i])):
            p, q = psi[i], psi[i + 1]
            r = math.hypot(p[0], q[0])
            if r > 1e-12:
                s = (q[0] * p - p[0] * q) / r
                c = (p[0] * p + q[0] * q) / r
            else:
                s, c = p, q
            out += [_orient(s, y), _orient(c, y)]
            i += 2
        else:
            out.append(_orient(psi[i], y))
            i += 1
    psi = np.array(out[:n_modes])
    return SturmBasis(y, lam[:n_modes].copy(), psi, mat)


def _group_rates(prod, lam, rtol=1e-9):
    """Merge numerically equal eigenvalues (degenerate pairs)."""
    order = np.argsort(lam)
    lam, prod = lam[order], prod[order]
    rates, coeffs = [], []
    for l, pr in zip(lam, prod):
        if rates and abs(l - rates[-1]) <= rtol * abs(l):
            coeffs[-1] += pr
        else:
            rates.append(l)
            coeffs.append(pr)
    return np.array(coeffs), np.array(rates)


def kernel_from_coupling(basis, alpha, beta, trunc_tol=1e-8, drop_tol=1e-12):
    """Exponential-sum kernel ``sum exp(-lam_n tau) a_n b_n`` (normalized; weight in ``gamma``).

    Warns when the retained modes miss more than ``trunc_tol`` of the energy of
    ``alpha`` or ``beta``.
    """
    a, bc = basis.coupling(alpha, beta)
    for name, f, coef in (("alpha", alpha, a), ("beta", beta, bc)):
        fv = f if isinstance(f, np.ndarray) else _sample(f, basis.y)
        energy = basis.inner(fv, fv)
        missing = energy - float(np.sum(coef**2))
        if energy > 0 and missing > trunc_tol * max(energy, 1.0):
            warnings.warn(f"{name} is truncated by the eigen-expansion "
                          f"(missing energy {missing:.2e})", RuntimeWarning, stacklevel=2)
    prod = a * bc
    # relative to |a| |b| so that round-off products of orthogonal data are dropped
    scale = math.sqrt(float(np.sum(a**2) * np.sum(bc**2)))
    keep = np.abs(prod) > drop_tol * max(scale, 1e-300)
    coeffs, rates = _group_rates(prod[keep], basis.lam[keep])
    couplings = [(c, 1.0, r) for c, r in zip(coeffs, rates)]
    return from_pde_ode(couplings if couplings else [(0.0, 1.0, 1.0)])


def micro_semigroup(D_w, b, N_y, psi0, t):
    """``exp(-t L) psi0`` for the discrete microscopic operator."""
    _, lower, diag, upper = periodic_operator(D_w, b, N_y)
    return linalg.expm(-t * _dense(lower, diag, upper)) @ np.asarray(psi0, float)


# ---------------------------------------------------------------- two-scale simulation

@dataclass
class TwoScaleProblem:
    """Data of the linear-coupling two-scale system.

    ``F`` is the y-averaged reaction ``int Phi(y, V) dy`` as a nonlinearity object.
    """

    F: object
    alpha: object
    beta: object
    D_w: object = 1.0
    b: object = 1.0
    D_eff: float = 1.0
    N_y: int = 64

    def operator(self):
        return periodic_operator(self.D_w, self.b, self.N_y)

    def samples(self):
        y = np.arange(self.N_y) / self.N_y
        return y, _sample(self.alpha, y), _sample(self.beta, y)

    def response(self):
        """``phi = L^{-1} beta``: the micro profile of ``W`` in equilibrium with ``V = 1``."""
        y, lower, diag, upper = self.operator()
        _, _, beta = self.samples()
        return np.linalg.solve(_dense(lower, diag, upper), beta)

    def gamma(self):
        """Total memory weight ``<alpha, L^{-1} beta>`` (no modal truncation)."""
        _, alpha, _ = self.samples()
        return float(np.mean(alpha * self.response()))

    def reduced(self):
        """Scalar memory problem with the same weight."""
        return BistableProblem(self.D_eff, self.F, self.gamma())

    def kernel(self, n_modes=None):
        basis = sturm_solve(self.D_w, self.b, self.N_y, n_modes or self.N_y)
        _, alpha, beta = self.samples()
        return kernel_from_coupling(basis, alpha, beta)


def homogenization_example(N_y=64, D_eff=1.0):
    """The homogenization example: ``F = -u(u - 1/4)(u - 1)``, ``alpha = psi_2 + psi_4``,
    ``beta = psi_2 + 10 psi_4 - psi_6``, ``D_w = b = 1``."""
    from .bistable import CubicNonlinearity

    def alpha(y):
        return torus_mode(2, y) + torus_mode(4, y)

    def beta(y):
        return torus_mode(2, y) + 10.0 * torus_mode(4, y) - torus_mode(6, y)

    return TwoScaleProblem(CubicNonlinearity(0.25), alpha, beta, 1.0, 1.0, D_eff, N_y)


@dataclass
class TwoScaleState:
    x: np.ndarray
    y: np.ndarray
    V: np.ndarray
    W: np.ndarray  # shape (N_y, n_x)
    t: float = 0.0

    def mean_W(self):
        return self.W.mean(axis=0)


@dataclass
class TwoScaleResult:
    state: TwoScaleState
    speed: float
    fit_residual: float
    times: np.ndarray
    positions: np.ndarray
    max_mean_W: float
    snapshots: dict = field(default_factory=dict)
    gamma: float = 0.0


def two_scale_initial(problem, x, x0):
    """Front in ``V`` with ``W`` in micro-equilibrium: ``W = V phi(y)``."""
    red = problem.reduced()
    V = front_initial(red, x, x0)
    W = np.outer(problem.response(), V)
    return V, W


def simulate_two_scale(problem, X=400.0, dx=0.1, dt=0.01, T_end=300.0, out_every=0.5,
                       x0=None, snapshot_times=(), fit_window=0.5, state=None, backend=None):
    """IMEX time stepping of the two-scale system with front tracking on ``V``.

    ``V`` takes implicit x-diffusion with explicit reaction and coupling; each
    row ``W(x, .)`` then takes an implicit periodic y-solve with the new ``V``.
    ``x`` is cell-centred on ``[0, X]`` with zero-flux ends.
    """
    red = problem.reduced()
    lo, mid, hi = red.roots
    lim = STABILITY_FACTOR / (red.lipschitz() + abs(red.gamma))
    if dt > lim:
        raise StabilityViolation(f"dt={dt} exceeds the limit {lim:.4g}")
    x = cell_grid(X, dx)
    y, alpha, beta = problem.samples()
    if state is None:
        V, W = two_scale_initial(problem, x, X / 2.0 if x0 is None else x0)
        state = TwoScaleState(x, y, V, W, 0.0)
    lower, diag, upper = neumann_laplacian(x.size, dx)
    sx = _accel.Tridiagonal(-dt * problem.D_eff * lower, 1.0 - dt * problem.D_eff * diag,
                            -dt * problem.D_eff * upper, backend)
    _, ylo, ydg, yup = problem.operator()
    sy = _accel.CyclicTridiagonal(dt * ylo, 1.0 + dt * ydg, dt * yup, backend)
    n_steps = int(round(T_end / dt))
    every = max(1, int(round(out_every / dt)))
    snap_steps = {int(round(t / dt)): t for t in snapshot_times}
    dt_beta = (dt * beta)[:, None]
    times, positions, snaps = [], [], {}
    max_mean = float(np.abs(state.mean_W()).max())

    def record():
        pos = front_position(x, state.V, mid)
        if pos is None:
            raise NoCrossing(f"V does not cross {mid:.4g} at t={state.t:.4g}")
        if pos < x[0] + 10 * dx or pos > x[-1] - 10 * dx:
            raise FrontExited(f"front reached the boundary at t={state.t:.4g}")
        times.append(state.t)
        positions.append(pos)

    record()
    for k in range(1, n_steps + 1):
        coupling = alpha @ state.W / y.size
        V_new = sx.solve(state.V + dt * (problem.F(state.V) + coupling))
        if not np.all(np.isfinite(V_new)):
            raise NaNDetected(f"non-finite V at t={state.t + dt:.4g}")
        rhs = state.W
        rhs += dt_beta * V_new[None, :]
        state.W = sy.solve_columns(rhs, out=rhs)
        state.V = V_new
        state.t += dt
        max_mean = max(max_mean, float(np.abs(state.mean_W()).max()))
        if k % every == 0 or k == n_steps:
            record()
        if k in snap_steps:
            snaps[snap_steps[k]] = (state.V.copy(), state.W.copy())
    speed, resid = fit_speed(times, positions, fit_window)
    return TwoScaleResult(state, speed, resid, np.array(times), np.array(positions),
                          max_mean, snaps, red.gamma)


# ---------------------------------------------------------------- oscillating system

@dataclass
class EpsResult:
    eps: float
    x: np.ndarray
    v: np.ndarray
    w: np.ndarray
    t: float
    times: np.ndarray
    positions: np.ndarray


def simulate_eps(eps, problem, X=100.0, dx=None, dt=0.01, T_end=20.0, x0=0.0, D_v=None,
                 out_every=0.5):
    """Direct simulation of the system with ``eps``-periodic coefficients.

        v_t = (D_v(x/eps) v_x)_x + F(v) + alpha(x/eps) w,
        w_t = eps^2 (D_w(x/eps) w_x)_x - b(x/eps) w + beta(x/eps) v

    on ``[-X/2, X/2]`` with zero-flux ends.  ``D_v`` defaults to the constant
    ``problem.D_eff``.  Initial data fold the two-scale equilibrium:
    ``v = V0(x)``, ``w = V0(x) phi(x/eps)`` with ``phi = L^{-1} beta``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if dx is None:
        dx = eps / 16.0
    if dx > eps / 16.0 * (1 + 1e-12):
        raise ResolutionError(f"dx={dx} does not resolve eps={eps} (need dx <= eps/16)")
    red = problem.reduced()
    lo, mid, hi = red.roots
    xc = cell_grid(X, dx) - X / 2.0
    n = xc.size
    faces = xc[:-1] + 0.5 * dx

    def cell(f, xs):
        return _sample(f, np.mod(xs / eps, 1.0))

    Dv = problem.D_eff if D_v is None else D_v
    dv_f = cell(Dv, faces)
    dw_f = eps**2 * cell(problem.D_w, faces)
    alpha, beta, bb = cell(problem.alpha, xc), cell(problem.beta, xc), cell(problem.b, xc)
    if np.any(dv_f <= 0) or np.any(dw_f <= 0) or np.any(bb <= 0):
        raise NotPositive("diffusion and damping must be strictly positive")

    def bands(df, react):
        lower = np.zeros(n)
        upper = np.zeros(n)
        lower[1:] = -df / dx**2
        upper[:-1] = -df / dx**2
        diag = -(lower + upper) + react
        return lower, diag, upper

    lv, dvg, uv = bands(dv_f, 0.0)
    lw, dwg, uw = bands(dw_f, bb)
    sv = _accel.Tridiagonal(dt * lv, 1.0 + dt * dvg, dt * uv)
    sw = _accel.Tridiagonal(dt * lw, 1.0 + dt * dwg, dt * uw)
    v = front_initial(red, xc, x0)
    phi = problem.response()
    yg = np.arange(problem.N_y) / problem.N_y
    w = v * np.interp(np.mod(xc / eps, 1.0), yg, phi, period=1.0)
    n_steps = int(round(T_end / dt))
    every = max(1, int(round(out_every / dt)))
    times, positions = [], []
    t = 0.0
    for k in range(1, n_steps + 1):
        v_new = sv.solve(v + dt * (problem.F(v) + alpha * w))
        w = sw.solve(w + dt * beta * v_new)
        v = v_new
        t += dt
        if k % every == 0 or k == n_steps:
            pos = front_position(xc, v, mid)
            if pos is not None:
                times.append(t)
                positions.append(pos)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
        raise NaNDetected("non-finite field in the oscillating system")
    return EpsResult(eps, xc, v, w, t, np.array(times), np.array(positions))


def weighted_distance(x, f, g, R=100.0):
    """``int rho |f - g|^2 dx`` with ``rho = 1 / cosh(|x| / R)``."""
    rho = 1.0 / np.cosh(np.abs(x) / R)
    return float(integrate.trapezoid(rho * (f - g) ** 2, x))


def oscillation_amplitude(x, f, eps, region=None):
    """Largest deviation of ``f`` from its moving average over one period ``eps``.

    ``region`` is an optional ``(x_lo, x_hi)`` window where the deviation is measured.
    """
    dx = x[1] - x[0]
    m = max(1, int(round(eps / dx)))
    kernel = np.ones(m) / m
    avg = np.convolve(f, kernel, mode="same")
    dev = np.abs(f - avg)
    valid = np.zeros_like(f, dtype=bool)
    valid[m:-m] = True
    if region is not None:
        valid &= (x >= region[0]) & (x <= region[1])
    if not valid.any():
        raise ValueError("measurement region is empty")
    return float(dev[valid].max())


def eps_comparison(problem, eps_values=(2.5, 0.25), X=100.0, T_end=20.0, dt=0.01,
                   dx_limit=0.05, R=100.0, D_v=None):
    """Run the oscillating system for each ``eps`` against the two-scale limit.

    Returns one dict per ``eps`` with the weighted distance of ``v_eps`` to ``V``
    and the oscillation amplitudes of ``v_eps`` and ``w_eps`` measured on the
    upper plateau behind the front.
    """
    limit = simulate_two_scale(problem, X=X, dx=dx_limit, dt=dt, T_end=T_end, x0=X / 2.0,
                               out_every=T_end / 4)
    xV = limit.state.x - X / 2.0
    rows = []
    for eps in eps_values:
        res = simulate_eps(eps, problem, X=X, dt=dt, T_end=T_end, x0=0.0, D_v=D_v)
        V = np.interp(res.x, xV, limit.state.V)
        front = res.positions[-1] if res.positions.size else 0.0
        margin = 10.0 + 2.0 * eps
        region = (front + margin, X / 2.0 - 5.0 - 2.0 * eps)
        rows.append({
            "eps": eps,
            "distance": weighted_distance(res.x, res.v, V, R),
            "osc_v": oscillation_amplitude(res.x, res.v, eps, region),
            "osc_w": oscillation_amplitude(res.x, res.w, eps, region),
            "front": float(front),
            "front_limit": float(limit.positions[-1] - X / 2.0),
        })
    return rows
