"""Time stepping of the memory equation and front tracking.

The field lives on a cell-centred grid ``x_i = (i + 1/2) dx`` of ``[0, X]`` with
zero-flux ends.  One step is IMEX Euler,

    (I - dt D Lap) u_new = u + dt (F(u) + gamma M),

where ``M`` approximates ``int Gamma(tau) u(t - tau) dtau`` from one of three
memory representations:

* :class:`OdeChannels` for exponential sums (one auxiliary field per rate),
* :class:`HistoryRing` for tabulated kernels and delay combs (ring buffer of past fields).

The weight is always ``p.gamma``; the kernel supplies the normalized profile.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _accel
from .errors import (FrontExited, NaNDetected, NoCrossing, StabilityViolation)
from .kernels import DEFAULT_TAIL_TOL, ExpSumKernel

STABILITY_FACTOR = 0.25
EXIT_CELLS = 10


# ---------------------------------------------------------------- memory representations

class OdeChannels:
    """Auxiliary fields ``w_i' = -lam_i w_i + u`` with ``M = sum c_i w_i``.

    ``hold="linear"`` integrates exactly for ``u`` linear across a step, which
    reproduces the product-trapezoid history sum; ``hold="constant"`` is the
    exponential integrator for ``u`` frozen at its new value.
    """

    kind = "ode"

    def __init__(self, kernel, u0, dt, hold="linear"):
        if hold not in ("linear", "constant"):
            raise ValueError("hold must be 'linear' or 'constant'")
        self.coeffs = np.asarray(kernel.coeffs, float)
        self.rates = np.asarray(kernel.rates, float)
        self.hold = hold
        lam = self.rates[:, None]
        self.w = np.asarray(u0, float)[None, :] / lam  # constant past
        ld = self.rates * dt
        self.decay = np.exp(-ld)
        a = -np.expm1(-ld) / self.rates
        if hold == "constant":
            self.q_old = np.zeros_like(a)
            self.q_new = a
        else:
            # int_0^dt exp(-lam r) r dr / dt, series for tiny lam dt
            m1 = np.where(ld > 1e-4, (-np.expm1(-ld) - ld * np.exp(-ld)) / self.rates**2,
                          dt**2 * (0.5 - ld / 3.0 + ld**2 / 8.0))
            self.q_old = m1 / dt
            self.q_new = a - self.q_old

    def value(self):
        return self.coeffs @ self.w

    def advance(self, u_old, u_new):
        self.w = (self.decay[:, None] * self.w + self.q_old[:, None] * u_old[None, :]
                  + self.q_new[:, None] * u_new[None, :])

    def fields(self):
        return self.w


class HistoryRing:
    """Ring buffer of past fields with fixed product-integration weights.

    Zero weights are dropped, so a delay comb touches only the rows next to
    each delay.
    """

    def __init__(self, kernel, u0, dt, tail_tol=DEFAULT_TAIL_TOL, backend=None):
        w = kernel.weights(dt, kernel.tau_max(tail_tol))
        lags = np.nonzero(w)[0]
        self.kind = "delay" if kernel.form == "delay" else "history"
        self.lags = lags.astype(np.int64)
        self.weights = w[lags]
        self.depth = int(lags.max()) if lags.size else 0
        u0 = np.asarray(u0, float)
        self.buf = np.repeat(u0[None, :], self.depth + 1, axis=0)  # constant past
        self.head = 0
        self.backend = backend

    def value(self):
        return _accel.history_sum(self.buf, self.head, self.lags, self.weights, self.backend)

    def advance(self, u_old, u_new):
        self.head = (self.head + 1) % self.buf.shape[0]
        self.buf[self.head] = u_new

    def fields(self):
        return None


def make_memory(kernel, u0, dt, representation="auto", **kw):
    """Pick the memory representation; ``auto`` uses ODE channels for exponential sums."""
    if representation == "auto":
        representation = "ode" if isinstance(kernel, ExpSumKernel) else "history"
    if representation == "ode":
        if not isinstance(kernel, ExpSumKernel):
            raise TypeError("ODE channels need an exponential-sum kernel")
        return OdeChannels(kernel, u0, dt, **kw)
    if representation == "history":
        return HistoryRing(kernel, u0, dt, **kw)
    raise ValueError(f"unknown memory representation {representation!r}")


# ---------------------------------------------------------------- state and stepping

@dataclass
class FieldState:
    """Grid, field, memory state and time of a run."""

    x: np.ndarray
    u: np.ndarray
    memory: object = None
    t: float = 0.0

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])


def cell_grid(X, dx):
    n = int(round(X / dx))
    if n < 3 or abs(n * dx - X) > 1e-9 * X:
        raise ValueError("X must be a multiple of dx with at least three cells")
    return (np.arange(n) + 0.5) * dx


def neumann_laplacian(n, dx):
    """Bands ``(lower, diag, upper)`` of the zero-flux finite-volume Laplacian."""
    lower = np.full(n, 1.0 / dx**2)
    upper = np.full(n, 1.0 / dx**2)
    diag = np.full(n, -2.0 / dx**2)
    diag[0] = diag[-1] = -1.0 / dx**2
    lower[0] = 0.0
    upper[-1] = 0.0
    return lower, diag, upper


def reaction_lipschitz(p):
    """``max |F'|`` on ``[u_minus, u_plus]`` plus ``|gamma|``."""
    return p.lipschitz() + abs(p.gamma)


def stability_limit(p, dx=None, scheme="imex"):
    lim = STABILITY_FACTOR / reaction_lipschitz(p)
    if scheme == "explicit":
        lim = min(lim, STABILITY_FACTOR * dx**2 / p.D)
    return lim


class Stepper:
    """Advances a :class:`FieldState` for a fixed problem, kernel and step size."""

    def __init__(self, p, kernel, dt, dx, n, scheme="imex", backend=None):
        if scheme not in ("imex", "explicit"):
            raise ValueError("scheme must be 'imex' or 'explicit'")
        limit = stability_limit(p, dx, scheme)
        if dt > limit * (1 + 1e-12):
            raise StabilityViolation(f"dt={dt} exceeds the {scheme} limit {limit:.4g}")
        self.p, self.kernel, self.dt, self.scheme = p, kernel, dt, scheme
        lower, diag, upper = neumann_laplacian(n, dx)
        if scheme == "imex":
            self.solver = _accel.Tridiagonal(-dt * p.D * lower, 1.0 - dt * p.D * diag,
                                             -dt * p.D * upper, backend)
        else:
            self.bands = (p.D * lower, p.D * diag, p.D * upper)

    def _lap(self, u):
        lo, d, up = self.bands
        out = d * u
        out[1:] += lo[1:] * u[:-1]
        out[:-1] += up[:-1] * u[1:]
        return out

    def __call__(self, state):
        u = state.u
        rhs = self.p.F(u)
        if state.memory is not None and self.p.gamma != 0.0:
            rhs = rhs + self.p.gamma * state.memory.value()
        if self.scheme == "imex":
            u_new = self.solver.solve(u + self.dt * rhs)
        else:
            u_new = u + self.dt * (self._lap(u) + rhs)
        if not np.all(np.isfinite(u_new)):
            raise NaNDetected(f"non-finite field at t={state.t + self.dt:.4g}")
        if state.memory is not None:
            state.memory.advance(u, u_new)
        state.u = u_new
        state.t += self.dt
        return state


def initial_state(p, kernel, u0, dx, dt, representation="auto", **memory_kw):
    """Build a state on the cell grid of length ``len(u0) * dx`` with constant past."""
    u0 = np.asarray(u0, float)
    x = (np.arange(u0.size) + 0.5) * dx
    memory = None
    if kernel is not None and p.gamma != 0.0:
        memory = make_memory(kernel, u0, dt, representation, **memory_kw)
    return FieldState(x, u0.copy(), memory, 0.0)


def step(state, p, kernel, dt, scheme="imex"):
    """One time step (in place); returns the state."""
    return Stepper(p, kernel, dt, state.dx, state.u.size, scheme)(state)


# ---------------------------------------------------------------- front tracking

def front_position(x, u, level):
    """Left-most upward crossing of ``level``, linearly interpolated; ``None`` if absent."""
    above = u >= level
    idx = np.nonzero(~above[:-1] & above[1:])[0]
    if idx.size == 0:
        return None
    i = idx[0]
    return float(x[i] + (level - u[i]) * (x[i + 1] - x[i]) / (u[i + 1] - u[i]))


def fit_speed(times, positions, window=0.5):
    """Least-squares line through the last ``window`` fraction; returns ``(speed, rms residual)``."""
    times = np.asarray(times, float)
    positions = np.asarray(positions, float)
    start = times[-1] - window * (times[-1] - times[0])
    sel = times >= start - 1e-12
    if sel.sum() < 2:
        raise ValueError("need at least two samples in the fit window")
    A = np.column_stack([np.ones(sel.sum()), times[sel]])
    coef, *_ = np.linalg.lstsq(A, positions[sel], rcond=None)
    resid = positions[sel] - A @ coef
    return float(coef[1]), float(np.sqrt(np.mean(resid**2)))


def front_initial(p, x, x0, width=1.0):
    """Increasing step from ``u_minus`` to ``u_plus`` centred at ``x0``."""
    lo, _, hi = p.roots
    return lo + 0.5 * (hi - lo) * (1.0 + np.tanh((x - x0) / (2.0 * width)))


def check_basin(p, u0, edge=0.05):
    """Left plateau below and right plateau above the middle zero."""
    _, mid, _ = p.roots
    k = max(1, int(edge * u0.size))
    if not (np.max(u0[:k]) < mid < np.min(u0[-k:])):
        raise ValueError("initial data must sit below the middle zero on the left "
                         "and above it on the right")


@dataclass
class RunResult:
    state: FieldState
    speed: float
    fit_residual: float
    times: np.ndarray
    positions: np.ndarray
    snapshots: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    bounded: bool = True

    def write(self, outdir, stem="run"):
        """CSV of ``(t, x*)``, optional snapshot CSVs and a JSON summary."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        np.savetxt(outdir / f"{stem}_track.csv", np.column_stack([self.times, self.positions]),
                   delimiter=",", header="t,x_front", comments="", fmt="%.12g")
        for t, (u, w) in sorted(self.snapshots.items()):
            cols = [self.state.x, u]
            header = ["x", "u"]
            if w is not None:
                cols.extend(w)
                header.extend(f"w{i}" for i in range(len(w)))
            np.savetxt(outdir / f"{stem}_snap_t{t:g}.csv", np.column_stack(cols), delimiter=",",
                       header=",".join(header), comments="", fmt="%.12g")
        summary = {"speed_estimate": self.speed, "fit_residual": self.fit_residual,
                   "bounded": self.bounded, "params": self.params}
        (outdir / f"{stem}_summary.json").write_text(json.dumps(summary, indent=2))


def run_to_front(p, kernel, X=400.0, dx=0.1, dt=0.01, T_end=300.0, out_every=0.5,
                 x0=None, u0=None, representation="auto", scheme="imex",
                 snapshot_times=(), fit_window=0.5, backend=None):
    """Evolve front-like data and measure the speed of the level-``u_mid`` crossing.

    Returns
    -------
    RunResult
        ``speed`` is the slope of the least-squares line through the tracked
        positions over the final ``fit_window`` of the run; ``fit_residual`` is
        the rms deviation from that line.
    """
    x = cell_grid(X, dx)
    if u0 is None:
        u0 = front_initial(p, x, X / 2.0 if x0 is None else x0)
    u0 = np.asarray(u0, float)
    check_basin(p, u0)
    lo, mid, hi = p.roots
    margin = 0.5 * (hi - lo)
    state = initial_state(p, kernel, u0, dx, dt, representation)
    stepper = Stepper(p, kernel, dt, dx, x.size, scheme, backend)
    n_steps = int(round(T_end / dt))
    every = max(1, int(round(out_every / dt)))
    snap_steps = {int(round(t / dt)): t for t in snapshot_times}
    guard = EXIT_CELLS * dx
    times, positions, snaps = [], [], {}
    bounded = True

    def record(k):
        pos = front_position(x, state.u, mid)
        if pos is None:
            raise NoCrossing(f"level {mid:.4g} not crossed at t={state.t:.4g}")
        if pos < x[0] + guard or pos > x[-1] - guard:
            raise FrontExited(f"front at x={pos:.4g} reached the boundary at t={state.t:.4g}")
        times.append(state.t)
        positions.append(pos)

    record(0)
    for k in range(1, n_steps + 1):
        stepper(state)
        if k % every == 0 or k == n_steps:
            record(k)
            if bounded and (state.u.min() < lo - margin or state.u.max() > hi + margin):
                bounded = False
        if k in snap_steps:
            w = state.memory.fields() if state.memory is not None else None
            snaps[snap_steps[k]] = (state.u.copy(), None if w is None else w.copy())
    speed, resid = fit_speed(times, positions, fit_window)
    params = {"X": X, "dx": dx, "dt": dt, "T_end": T_end, "gamma": p.gamma, "D": p.D,
              "representation": None if state.memory is None else state.memory.kind,
              "scheme": scheme}
    return RunResult(state, speed, resid, np.array(times), np.array(positions), snaps,
                     params, bounded)

