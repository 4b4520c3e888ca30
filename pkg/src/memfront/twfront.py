"""Traveling fronts of the auxiliary nonlocal equation and the speed fixed point.

For a fixed auxiliary speed ``v`` the profile ``U`` and speed ``c`` solve

    -c U' = D U'' + F(U) + gamma int_0^inf Gamma(tau) U(xi + v tau) dtau,

with ``U(-inf) = u_minus`` and ``U(+inf) = u_plus``.  Fronts of the memory
equation are the fixed points ``v = C(gamma, v)``.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, sparse
from scipy.sparse.linalg import spsolve

from .bistable import PolyNonlinearity, area_functional, local_cubic_speed
from .errors import (BracketFailure, DomainTooSmall, MonotonicityViolation, NoConvergence)
from .kernels import DEFAULT_TAIL_TOL

DEFAULTS = dict(L=60.0, h=0.05, newton_tol=1e-10, max_iter=30, bc_tol=1e-6,
                layer_tol=1e-6, max_halvings=8, tail_tol=DEFAULT_TAIL_TOL)
MONO_TOL = 1e-4
FP_TOL = 1e-6


@dataclass
class FrontSolution:
    """Discrete front: profile on ``xi``, speed and the equilibria it connects."""

    xi: np.ndarray
    profile: np.ndarray
    speed: float
    connects: tuple
    residual_norm: float
    v: float
    gamma: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def h(self):
        return float(self.xi[1] - self.xi[0])

    @property
    def L(self):
        return float(self.xi[-1])

    def is_monotone(self, tol=1e-8):
        return bool(np.all(np.diff(self.profile) >= -tol))

    def to_csv(self, path, params=None):
        """Write ``xi,U`` as CSV and a JSON sidecar next to it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, np.column_stack([self.xi, self.profile]), delimiter=",",
                   header="xi,U", comments="", fmt="%.12g")
        meta = {
            "speed": self.speed,
            "v": self.v,
            "gamma": self.gamma,
            "residual_norm": self.residual_norm,
            "connects": list(self.connects),
            "grid": {"L": self.L, "h": self.h, "n": int(self.xi.size)},
            "params": params or {},
            "diagnostics": {k: v for k, v in self.diagnostics.items()
                            if isinstance(v, (int, float, bool, str))},
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2))
        return path


def _opts(overrides):
    unknown = set(overrides) - set(DEFAULTS)
    if unknown:
        raise TypeError(f"unknown solver options {sorted(unknown)}")
    o = dict(DEFAULTS)
    o.update(overrides)
    return o


def shift_matrix(kernel, v, n, h, tail_tol=DEFAULT_TAIL_TOL):
    """Sparse ``(n, n)`` matrix approximating ``U -> int Gamma(tau) U(xi + v tau) dtau``.

    Shifts ``v tau`` are resolved on the grid with product-integration weights
    (exact for piecewise-linear ``U``); indices beyond the ends are clamped,
    which extends ``U`` by its boundary values.
    """
    if v == 0.0:
        return sparse.identity(n, format="csr")
    depth = kernel.tau_max(tail_tol)
    w = kernel.weights(h / abs(v), depth)
    w = w[: min(w.size, 2 * n)]
    w[-1] += 1.0 - w.sum()
    step = 1 if v > 0 else -1
    rows = np.repeat(np.arange(n), w.size)
    cols = np.clip(rows + step * np.tile(np.arange(w.size), n), 0, n - 1)
    vals = np.tile(w, n)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _guess(p, xi, shift=0.0):
    lo, mid, hi = p.roots
    amp = 1.0
    if isinstance(p.F, PolyNonlinearity) and p.F.poly.degree() == 3 and p.F.coeffs[3] < 0:
        amp = -p.F.coeffs[3]
        c0 = local_cubic_speed(p)
    else:
        c0 = 0.0
    kappa = (hi - lo) * math.sqrt(amp / (2.0 * p.D))
    x0 = math.log((hi - mid) / (mid - lo)) / kappa + shift
    return lo + (hi - lo) / (1.0 + np.exp(-kappa * (xi - x0))), c0


class _System:
    """Residual and Jacobian of the discretized front equation."""

    def __init__(self, p, kernel, v, xi):
        self.p = p
        self.n = xi.size
        self.h = xi[1] - xi[0]
        self.mid = self.n // 2
        lo, um, hi = p.roots
        self.ends = (lo, hi)
        self.um = um
        n, h, D = self.n, self.h, p.D
        self.D1 = sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="csr") / (2 * h)
        self.D2 = sparse.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)],
                               [-1, 0, 1], format="csr") * (D / h ** 2)
        K = shift_matrix(kernel, v, n, h) if p.gamma != 0.0 else sparse.csr_matrix((n, n))
        self.lin = (self.D2 + p.gamma * K).tocsr()
        self.inner = slice(1, n - 1)

    def full(self, interior):
        U = np.empty(self.n)
        U[0], U[-1] = self.ends
        U[1:-1] = interior
        return U

    def residual(self, z):
        U = self.full(z[:-1])
        c = z[-1]
        r = c * (self.D1 @ U) + self.lin @ U + self.p.F(U)
        return np.append(r[self.inner], U[self.mid] - self.um)

    def jacobian(self, z):
        U = self.full(z[:-1])
        J = (z[-1] * self.D1 + self.lin + sparse.diags(self.p.F.deriv(U))).tocsc()
        J = J[self.inner, :][:, self.inner]
        col = (self.D1 @ U)[self.inner]
        row = np.zeros(self.n - 2)
        row[self.mid - 1] = 1.0
        return sparse.bmat([[J, col[:, None]], [row[None, :], None]], format="csc")


def _newton(sysm, z, o):
    r = sysm.residual(z)
    rn = float(np.max(np.abs(r)))
    it = 0
    for it in range(1, o["max_iter"] + 1):
        if rn <= o["newton_tol"]:
            return z, rn, it - 1
        dz = spsolve(sysm.jacobian(z), -r)
        if not np.all(np.isfinite(dz)):
            raise NoConvergence("singular Newton system")
        lam = 1.0
        for _ in range(o["max_halvings"] + 1):
            zt = z + lam * dz
            rt = sysm.residual(zt)
            rtn = float(np.max(np.abs(rt)))
            if rtn < rn:
                break
            lam *= 0.5
        else:
            if rn <= 100 * o["newton_tol"]:
                # roundoff floor just above the target
                return z, rn, it
            raise NoConvergence(f"line search exhausted at residual {rn:.3e}")
        z, r, rn = zt, rt, rtn
    if rn <= o["newton_tol"]:
        return z, rn, it
    raise NoConvergence(f"no convergence in {o['max_iter']} iterations (residual {rn:.3e})")


def _initial_vector(p, xi, initial, shift):
    if initial is not None:
        U = np.interp(xi, initial.xi, initial.profile)
        c = initial.speed
    else:
        U, c = _guess(p, xi, shift)
    return np.append(U[1:-1], c)


def _solve_once(p, kernel, v, xi, initial, shift, o):
    sysm = _System(p, kernel, v, xi)
    z, rn, its = _newton(sysm, _initial_vector(p, xi, initial, shift), o)
    return sysm.full(z[:-1]), float(z[-1]), rn, its


def solve_profile(p, kernel, v, initial=None, shift=0.0, **opts):
    """Front profile and speed ``C(gamma, v)`` of the auxiliary equation.

    Parameters
    ----------
    p : BistableProblem
        Its ``gamma`` is used as the memory weight; the kernel supplies the profile.
    kernel : MemoryKernel
    v : float
        Auxiliary speed converting delays into spatial shifts.
    initial : FrontSolution, optional
        Warm start (interpolated onto the grid).
    shift : float
        Offset of the default initial guess; the converged speed does not depend on it.
    **opts
        ``L``, ``h``, ``newton_tol``, ``max_iter``, ``bc_tol``, ``layer_tol``,
        ``max_halvings``, ``tail_tol``.

    Returns
    -------
    FrontSolution
    """
    o = _opts(opts)
    v = float(v)
    n = int(round(2 * o["L"] / o["h"]))
    n += n % 2
    xi = np.linspace(-o["L"], o["L"], n + 1)
    try:
        U, c, rn, its = _solve_once(p, kernel, v, xi, initial, shift, o)
        path = "direct"
    except NoConvergence:
        if v == 0.0 or initial is not None:
            raise
        # continuation in v from the local front
        sol = solve_profile(p, kernel, 0.0, shift=shift, **opts)
        for vv in np.linspace(0.0, v, 9)[1:]:
            sol = solve_profile(p, kernel, vv, initial=sol, **opts)
        return sol
    lo, _, hi = p.roots
    slope_l = abs(U[1] - U[0]) / (xi[1] - xi[0])
    slope_r = abs(U[-1] - U[-2]) / (xi[1] - xi[0])
    if max(slope_l, slope_r) > o["layer_tol"] or max(abs(U[1] - lo), abs(U[-2] - hi)) > o["bc_tol"]:
        raise DomainTooSmall(
            f"boundary layer not resolved on L={o['L']}: |U'| = {slope_l:.2e}, {slope_r:.2e}")
    sol = FrontSolution(xi, U, c, (lo, hi), rn, v, p.gamma,
                        {"newton_iterations": its, "path": path,
                         "boundary_slope": max(slope_l, slope_r)})
    sol.diagnostics["monotone"] = sol.is_monotone()
    return sol


def speed_curve(p, kernel, v_list, warm=True, mono_tol=MONO_TOL, **opts):
    """Sample ``C(gamma, v)`` on ``v_list`` and check its monotonicity.

    Returns a list of ``(v, C)`` pairs in the given order.  ``C`` must be
    non-increasing in ``v`` for ``gamma >= 0`` (non-decreasing for ``gamma < 0``);
    an excursion beyond ``mono_tol`` raises :class:`MonotonicityViolation`.
    """
    order = np.argsort(v_list, kind="stable")
    speeds = {}
    prev = None
    for i in order:
        sol = solve_profile(p, kernel, v_list[i], initial=prev if warm else None, **opts)
        speeds[i] = sol.speed
        prev = sol
    sorted_c = np.array([speeds[i] for i in order])
    sign = 1.0 if p.gamma >= 0 else -1.0
    rise = sign * np.diff(sorted_c)
    if rise.size and rise.max() > mono_tol:
        j = int(np.argmax(rise))
        raise MonotonicityViolation(
            f"C rises by {rise[j]:.2e} between v={v_list[order[j]]} and v={v_list[order[j + 1]]}")
    return [(float(v_list[i]), float(speeds[i])) for i in range(len(v_list))]


def solve_fixed_point(p, kernel, fp_tol=FP_TOL, max_expand=30, method="brent", **opts):
    """Speed ``c_gamma`` of the memory-equation front: the root of ``C(gamma, v) - v``.

    ``C(gamma, .) - v`` is continuous and strictly decreasing, so a slightly
    padded bracket around ``[0, C(gamma, 0)]`` (doubled until the sign changes)
    is searched with Brent's method (``method="brent"``) or plain bisection
    (``method="bisect"``).  The returned front is the auxiliary front at ``v = c_gamma``;
    its diagnostics carry the fixed-point residual and the sandwich check
    (``c_gamma`` between 0 and ``C(gamma, 0)`` with sign opposite to the area).
    """
    if method not in ("brent", "bisect"):
        raise ValueError(f"unknown method {method!r}")
    base = solve_profile(p, kernel, 0.0, **opts)
    c0 = base.speed
    if p.gamma == 0.0:
        base.diagnostics.update(fp_residual=0.0, C0=c0, evaluations=1)
        base.diagnostics["sandwich_ok"] = _sandwich(p, c0, c0)
        return base

    cache = {0.0: base}
    nearest = [base]

    def g(v):
        if v in cache:
            return cache[v].speed - v
        sol = solve_profile(p, kernel, v, initial=nearest[0], **opts)
        cache[v] = sol
        nearest[0] = sol
        return sol.speed - v

    # the root lies between 0 and C(gamma, 0) for gamma >= 0; pad slightly and
    # let the expansion loop handle anything else
    pad = 0.05 * abs(c0) + 1e-4
    lo, hi = min(0.0, c0) - pad, max(0.0, c0) + pad
    glo, ghi = g(lo), g(hi)
    expand = 0
    while glo < 0 or ghi > 0:
        if expand >= max_expand:
            raise BracketFailure(f"no sign change of C(v) - v on [{lo}, {hi}]")
        width = hi - lo
        if glo < 0:
            lo -= width
            glo = g(lo)
        if ghi > 0:
            hi += width
            ghi = g(hi)
        expand += 1
    if glo == 0.0:
        root = lo
    elif ghi == 0.0:
        root = hi
    else:
        search = optimize.brentq if method == "brent" else optimize.bisect
        root = search(g, lo, hi, xtol=fp_tol * 1e-3, rtol=4 * np.finfo(float).eps)
    g(root)
    sol = cache[root]
    sol.diagnostics.update(fp_residual=abs(sol.speed - root), C0=c0,
                           evaluations=len(cache), bracket=(lo, hi))
    sol.diagnostics["sandwich_ok"] = _sandwich(p, sol.speed, c0)
    if sol.diagnostics["fp_residual"] >= fp_tol:
        raise NoConvergence(f"fixed-point residual {sol.diagnostics['fp_residual']:.2e}")
    return sol


def _sandwich(p, c, c0, slack=1e-8):
    """``c`` lies between 0 and ``C(gamma, 0)`` and has the sign opposite to the area functional."""
    area = area_functional(p)
    between = min(0.0, c0) - slack <= c <= max(0.0, c0) + slack
    if abs(area) < 1e-12:
        return bool(between)
    return bool(between and (np.sign(c) == -np.sign(area) or abs(c) <= slack))
