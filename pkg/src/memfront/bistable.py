"""Bistable nonlinearities, their tilt by the memory weight, and closed-form speed data.

The tilted function is ``F_gamma(u) = F(u) + gamma u``.  A problem is
admissible when ``F_gamma`` has exactly three simple zeros
``u_minus < u_mid < u_plus`` with derivative signs ``(-, +, -)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, optimize

from .errors import NotBistable, OutOfRegime

EPS_PAD = 1e-6
ROOT_TOL = 1e-10


# ---------------------------------------------------------------- nonlinearities

class PolyNonlinearity:
    """Polynomial ``F(u) = sum coeffs[k] u**k`` (ascending order)."""

    kind = "poly"

    def __init__(self, coeffs):
        self.poly = Polynomial(np.asarray(coeffs, dtype=float))
        self._d1 = self.poly.deriv()

    @property
    def coeffs(self):
        return self.poly.coef

    def __call__(self, u):
        return self.poly(u)

    def deriv(self, u):
        return self._d1(u)

    def tilted_poly(self, gamma):
        return self.poly + Polynomial([0.0, gamma])

    def to_dict(self):
        return {"type": "poly", "coeffs": self.coeffs.tolist()}

    def __repr__(self):
        return f"PolyNonlinearity({self.coeffs.tolist()})"


class CubicNonlinearity(PolyNonlinearity):
    """``F(u) = -u (u - a) (u - 1)``."""

    kind = "cubic"

    def __init__(self, a):
        self.a = float(a)
        super().__init__([0.0, -self.a, 1.0 + self.a, -1.0])

    def to_dict(self):
        return {"type": "cubic", "a": self.a}

    def __repr__(self):
        return f"CubicNonlinearity(a={self.a})"


class CallbackNonlinearity:
    """User-supplied ``f`` and derivative ``df``; roots are found on ``scan`` by bracketing."""

    kind = "callback"

    def __init__(self, f, df, scan=(-10.0, 10.0), n_scan=4001):
        self.f = f
        self.df = df
        self.scan = scan
        self.n_scan = n_scan

    def __call__(self, u):
        return self.f(u)

    def deriv(self, u):
        return self.df(u)

    def to_dict(self):
        raise TypeError("callback nonlinearities cannot be serialized")


def nonlinearity_from_dict(block):
    kind = block.get("type")
    if kind == "cubic":
        return CubicNonlinearity(block["a"])
    if kind == "poly":
        return PolyNonlinearity(block["coeffs"])
    raise ValueError(f"unknown nonlinearity type {kind!r}")


# ---------------------------------------------------------------- problem type

@dataclass(frozen=True)
class BistableProblem:
    """Diffusion constant ``D``, nonlinearity ``F`` and tilt ``gamma``.

    ``gamma`` equals the memory weight; negative values are accepted for
    numerical experiments outside the comparison-principle setting.
    """

    D: float
    F: object
    gamma: float = 0.0
    _roots: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError("diffusion constant must be positive")
        object.__setattr__(self, "_roots", _compute_roots(self.F, self.gamma))

    def F_gamma(self, u):
        return self.F(u) + self.gamma * np.asarray(u)

    def dF_gamma(self, u):
        return self.F.deriv(u) + self.gamma

    @property
    def roots(self):
        return self._roots

    def with_gamma(self, gamma):
        return BistableProblem(self.D, self.F, gamma)

    def lipschitz(self, margin=0.0):
        """``max |F'|`` on the (optionally widened) invariant interval."""
        lo, _, hi = self.roots
        u = np.linspace(lo - margin, hi + margin, 2001)
        return float(np.max(np.abs(self.F.deriv(u))))

    @classmethod
    def cubic(cls, a, beta=0.0, D=1.0):
        """The cubic case with memory weight ``gamma = -beta``."""
        return cls(D, CubicNonlinearity(a), -beta)

    def to_dict(self):
        return {"D": self.D, "nonlinearity": self.F.to_dict(), "gamma": self.gamma}


def _simple_check(roots, dfun):
    if len(roots) != 3:
        raise NotBistable(f"expected three real zeros, found {len(roots)}")
    d = [float(dfun(r)) for r in roots]
    if not (d[0] < 0 < d[1] and d[2] < 0):
        raise NotBistable(f"derivative signs at zeros are {np.sign(d)}, need (-, +, -)")
    if min(np.diff(roots)) <= 1e-12:
        raise NotBistable("zeros are not simple")
    return tuple(float(r) for r in roots)


def _compute_roots(F, gamma):
    if isinstance(F, CubicNonlinearity):
        # F_gamma = -u [u^2 - (1+a) u + a - gamma]
        disc = (1.0 - F.a) ** 2 + 4.0 * gamma
        if disc <= 0:
            raise NotBistable(f"quadratic factor has no two real roots (disc={disc:.3g})")
        s = math.sqrt(disc)
        roots = sorted([0.0, 0.5 * (1.0 + F.a) - 0.5 * s, 0.5 * (1.0 + F.a) + 0.5 * s])
        return _simple_check(roots, lambda u: F.deriv(u) + gamma)
    if isinstance(F, PolyNonlinearity):
        p = F.tilted_poly(gamma)
        r = p.roots()
        real = np.sort(r[np.abs(r.imag) <= 1e-9 * (1 + np.abs(r.real))].real)
        polished = [optimize.newton(p, x0, fprime=p.deriv(), tol=1e-15, maxiter=50)
                    for x0 in real]
        return _simple_check(sorted(polished), p.deriv())
    lo, hi = F.scan
    u = np.linspace(lo, hi, F.n_scan)
    g = F(u) + gamma * u
    roots = []
    for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
        roots.append(optimize.brentq(lambda s: F(s) + gamma * s, u[i], u[i + 1], xtol=1e-15))
    roots.extend(u[g == 0.0].tolist())
    return _simple_check(sorted(roots), lambda s: F.deriv(s) + gamma)


# ---------------------------------------------------------------- operations

def tilted_roots(p):
    """Zeros ``(u_minus, u_mid, u_plus)`` of ``F_gamma``."""
    return p.roots


def area_functional(p):
    """``int_{u_minus}^{u_plus} F_gamma(u) du``; its sign is opposite to the local front speed."""
    lo, _, hi = p.roots
    if isinstance(p.F, PolyNonlinearity):
        anti = p.F.tilted_poly(p.gamma).integ()
        return float(anti(hi) - anti(lo))
    val, _ = integrate.quad(p.F_gamma, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)
    return float(val)


def mckean_speed(a, beta):
    """Closed-form local speed ``(1 + a - 3 sqrt((1-a)^2 - 4 beta)) / (2 sqrt 2)``.

    Equals the speed of the increasing front from 0 to the upper zero of the
    tilted cubic when ``-a < beta < (1-a)^2/4``.
    """
    disc = (1.0 - a) ** 2 - 4.0 * beta
    if disc <= 0:
        raise NotBistable(f"beta={beta} is not below (1-a)^2/4={(1 - a) ** 2 / 4}")
    return (1.0 + a - 3.0 * math.sqrt(disc)) / (2.0 * math.sqrt(2.0))


def local_cubic_speed(p):
    """Exact local speed for a cubic ``F_gamma = -A (u-r1)(u-r2)(u-r3)``.

    ``sqrt(A D / 2) (2 r2 - r1 - r3)`` with the sorted zeros; agrees with
    :func:`mckean_speed` whenever zero is the lower stable state.
    """
    if not isinstance(p.F, PolyNonlinearity) or p.F.poly.degree() != 3:
        raise TypeError("local_cubic_speed needs a cubic polynomial nonlinearity")
    A = -p.F.coeffs[3]
    if A <= 0:
        raise NotBistable("leading coefficient must be negative")
    r1, r2, r3 = p.roots
    return math.sqrt(A * p.D / 2.0) * (2.0 * r2 - r1 - r3)


def beta_zero(a):
    """Coupling where the cubic local speed changes sign: ``(2a^2 - 5a + 2)/9``.

    Defined for ``1/2 <= a < 1``; the symmetric cubic ``a = 1/2`` gives 0.
    """
    if not 0.5 <= a < 1.0:
        raise OutOfRegime(f"a={a} outside [1/2, 1[")
    return (2.0 * a * a - 5.0 * a + 2.0) / 9.0


def gamma_star(F, gamma_max=10.0, n=2001, margin=1e-3):
    """Largest scanned tilt in ``[0, gamma_max]`` below which ``F_gamma`` stays bistable."""
    last_ok = None
    for g in np.linspace(0.0, gamma_max, n):
        try:
            _compute_roots(F, g)
        except NotBistable:
            break
        last_ok = g
    if last_ok is None:
        raise NotBistable("F itself is not bistable")
    return max(0.0, last_ok - margin)


@dataclass(frozen=True)
class EstimateParams:
    """Bounds on ``F_gamma`` feeding the front-speed estimates.

    * ``F_gamma >= -Phi_star`` on ``[u_minus, u_mid]``, ``F_gamma <= Phi_sup`` on ``[u_mid, u_plus]``;
    * ``F_gamma(u) >= alpha_star (u - a_star)`` on ``[a_star, b_star]`` inside ``[u_mid, u_plus]``;
    * ``F_gamma(u) <= alpha_sup (u - a_sup)`` on ``[b_sup, a_sup]`` inside ``[u_minus, u_mid]``.
    """

    Phi_star: float
    Phi_sup: float
    a_star: float
    b_star: float
    alpha_star: float
    a_sup: float
    b_sup: float
    alpha_sup: float

    def check(self, p, n=10_000):
        """Verify every inequality by dense sampling; returns a list of failures."""
        lo, mid, hi = p.roots
        bad = []
        u = np.linspace(lo, mid, n)
        if np.any(p.F_gamma(u) < -self.Phi_star):
            bad.append("Phi_star")
        u = np.linspace(mid, hi, n)
        if np.any(p.F_gamma(u) > self.Phi_sup):
            bad.append("Phi_sup")
        if not (mid <= self.a_star < self.b_star <= hi and self.alpha_star > 0):
            bad.append("star chord placement")
        else:
            u = np.linspace(self.a_star, self.b_star, n)
            if np.any(p.F_gamma(u) < self.alpha_star * (u - self.a_star)):
                bad.append("star chord")
        if not (lo <= self.b_sup < self.a_sup <= mid and self.alpha_sup > 0):
            bad.append("sup chord placement")
        else:
            u = np.linspace(self.b_sup, self.a_sup, n)
            if np.any(p.F_gamma(u) > self.alpha_sup * (u - self.a_sup)):
                bad.append("sup chord")
        return bad


def _best_chord(fg, lo, hi, sign, n_coarse, n_fine):
    """Maximize ``alpha * width`` over windows anchored at ``a`` in ``[lo, hi]``.

    ``sign=+1``: window ``[a, b]`` with ``a < b``, bound ``F >= alpha (u - a)``.
    ``sign=-1``: window ``[b, a]`` with ``b < a``, bound ``F <= alpha (u - a)``.
    """
    grid = np.linspace(lo, hi, n_coarse)
    best = None
    for i, a in enumerate(grid):
        for b in (grid[i + 1:] if sign > 0 else grid[:i][::-1]):
            u = np.linspace(a, b, n_fine)[1:]
            ratio = fg(u) / (u - a)
            alpha = float(ratio.min()) * (1.0 - 1e-9)
            if alpha <= 0:
                continue
            score = alpha * abs(b - a)
            if best is None or score > best[0]:
                best = (score, float(a), float(b), alpha)
    if best is None:
        raise NotBistable("no admissible chord found")
    return best[1:]


def estimate_params(p, n_coarse=41, n_fine=400, n_validate=10_000):
    """Derive the bound data from ``F_gamma`` by grid search, then validate by sampling."""
    lo, mid, hi = p.roots
    fg = p.F_gamma
    u = np.linspace(lo, mid, n_validate)
    phi_star = max(0.0, -float(fg(u).min())) + EPS_PAD
    u = np.linspace(mid, hi, n_validate)
    phi_sup = max(0.0, float(fg(u).max())) + EPS_PAD
    a_s, b_s, al_s = _best_chord(fg, mid, hi, +1, n_coarse, n_fine)
    a_u, b_u, al_u = _best_chord(fg, lo, mid, -1, n_coarse, n_fine)
    for _ in range(40):
        params = EstimateParams(phi_star, phi_sup, a_s, b_s, al_s, a_u, b_u, al_u)
        bad = params.check(p, n_validate)
        if not bad:
            return params
        # sampling missed a sharper minimum of the ratio; shrink the slopes
        if "star chord" in bad:
            al_s *= 0.999
        if "sup chord" in bad:
            al_u *= 0.999
        if set(bad) - {"star chord", "sup chord"}:
            raise NotBistable(f"estimate construction failed: {bad}")
    raise NotBistable("could not validate chord slopes")


def speed_bounds(p, params, kernel, v):
    """Lower and upper bounds on the auxiliary front speed ``C(gamma, v)``.

    Requires ``gamma >= 0`` (the comparison-principle setting).
    """
    gamma = p.gamma
    if gamma < 0:
        raise OutOfRegime("speed bounds need a nonnegative memory weight")
    lo, mid, hi = p.roots
    D = p.D
    _, g1 = kernel.moments()
    ps, pu = params.Phi_star, params.Phi_sup
    bounds = []
    # without memory C does not depend on v, so both branches apply
    if v >= 0 or gamma == 0.0:
        width = params.a_sup - params.b_sup
        gv = gamma * g1 * v
        lower = -max(math.sqrt(pu * D / width), pu * gv / (params.alpha_sup * width)) - gv
        bounds.append((lower, math.sqrt(ps * D / (hi - mid))))
    if v <= 0 or gamma == 0.0:
        width = params.b_star - params.a_star
        gv = gamma * g1 * abs(v)
        upper = max(math.sqrt(ps * D / width), ps * gv / (params.alpha_star * width)) + gv
        bounds.append((-math.sqrt(pu * D / (mid - lo)), upper))
    # at v = 0 both branches hold; keep the tighter ends
    lower = max(b[0] for b in bounds)
    upper = min(b[1] for b in bounds)
    return lower, upper


def reflected(p):
    """Problem for the reflected front ``s - U(-xi)`` with ``s = u_minus + u_plus``.

    Its tilted nonlinearity is ``-F_gamma(s - u)``; with auxiliary speed ``-v``
    the front speed flips sign.
    """
    lo, _, hi = p.roots
    s = lo + hi
    g = p.gamma
    if isinstance(p.F, PolyNonlinearity):
        # F~(u) = -F(s - u) - gamma s
        q = -p.F.poly(Polynomial([s, -1.0])) - g * s
        return BistableProblem(p.D, PolyNonlinearity(q.coef), g)
    F = p.F
    lo_s, hi_s = F.scan
    cb = CallbackNonlinearity(lambda u: -F(s - u) - g * s, lambda u: F.deriv(s - u),
                              scan=(s - hi_s, s - lo_s), n_scan=F.n_scan)
    return BistableProblem(p.D, cb, g)
