"""Memory kernels: a total weight ``gamma`` times a normalized, nonnegative profile.

Three profile families are supported:

* exponential sums ``sum_i c_i exp(-lam_i tau)`` (what a linear ODE coupling produces),
* delay combs ``sum_j w_j delta(tau - tau_j)``,
* tabulated profiles, piecewise linear with an exponential tail.

Every kernel exposes per-interval integrals ``int Gamma`` and
``int Gamma(tau) (tau - t_j)`` over a uniform partition.  These give exact
product-integration weights for piecewise-linear data, used both for the
history convolution in time and for the spatial shifts of the traveling-wave
solver.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DivergentMoment, InsufficientHistory, NegativeKernel, ZeroWeight

NORMALIZATION_TOL = 1e-10
DEFAULT_TAIL_TOL = 1e-8


class MemoryKernel:
    """Base class.  Subclasses hold a normalized profile and the weight ``gamma``."""

    form = None
    gamma = 0.0

    def __call__(self, tau):
        raise NotImplementedError

    def cdf(self, tau):
        """Mass ``int_0^tau Gamma``."""
        raise NotImplementedError

    def interval_moments(self, delta, n):
        """Return ``(I0, I1)`` with ``I0[j] = int Gamma`` and
        ``I1[j] = int Gamma(tau) (tau - j delta)`` over ``[j delta, (j+1) delta]``."""
        raise NotImplementedError

    def moments(self):
        """Return ``(total, g1_hat)``: the mass and first moment of the profile."""
        raise NotImplementedError

    def tail_mass(self, tau):
        return max(0.0, 1.0 - float(self.cdf(tau)))

    def tau_max(self, tail_tol=DEFAULT_TAIL_TOL):
        """Smallest depth (up to bisection accuracy) whose neglected tail mass is below ``tail_tol``."""
        hi = 1.0
        while self.tail_mass(hi) >= tail_tol:
            hi *= 2.0
            if hi > 1e12:
                raise DivergentMoment("kernel tail does not decay")
        lo = 0.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.tail_mass(mid) >= tail_tol:
                lo = mid
            else:
                hi = mid
        return hi

    def weights(self, delta, depth):
        """Product-integration weights on nodes ``0, delta, 2 delta, ...``.

        ``int_0^inf Gamma(tau) f(tau) dtau`` is approximated by ``sum_k w_k f(k delta)``,
        exact when ``f`` is piecewise linear between nodes and constant beyond the
        last node.  The weights sum to one; the mass beyond ``depth`` is carried by
        the last node.
        """
        if delta <= 0:
            raise ValueError("delta must be positive")
        n = max(1, int(math.ceil(depth / delta)))
        i0, i1 = self.interval_moments(delta, n)
        right = i1 / delta
        left = i0 - right
        w = np.zeros(n + 1)
        w[:-1] += left
        w[1:] += right
        w[-1] += 1.0 - float(i0.sum())
        return w

    def validate(self):
        total, g1 = self.moments()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"kernel is not normalized: total mass {total!r}")
        if not np.isfinite(g1):
            raise DivergentMoment("first moment is not finite")
        return self

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ExpSumKernel(MemoryKernel):
    """``Gamma(tau) = sum_i coeffs[i] exp(-rates[i] tau)`` with ``sum coeffs/rates = 1``."""

    coeffs: np.ndarray
    rates: np.ndarray
    gamma: float = 1.0
    form = "expsum"

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.exp(-np.multiply.outer(tau, self.rates)) @ self.coeffs

    def cdf(self, tau):
        tau = np.asarray(tau, dtype=float)
        e = -np.expm1(-np.multiply.outer(tau, self.rates))
        return e @ (self.coeffs / self.rates)

    def tail_mass(self, tau):
        # direct form avoids cancellation in 1 - cdf for deep tails
        return float(np.exp(-self.rates * tau) @ (self.coeffs / self.rates))

    def interval_moments(self, delta, n):
        t = delta * np.arange(n)
        lam = self.rates
        decay = np.exp(-np.multiply.outer(t, lam))
        ld = lam * delta
        f0 = -np.expm1(-ld) / lam
        # int_0^delta s exp(-lam s) ds, written to stay accurate for small lam*delta
        f1 = np.where(ld > 1e-4,
                      (-np.expm1(-ld) - ld * np.exp(-ld)) / lam**2,
                      delta**2 * (0.5 - ld / 3.0 + ld**2 / 8.0))
        return decay @ (self.coeffs * f0), decay @ (self.coeffs * f1)

    def moments(self):
        total = float(np.sum(self.coeffs / self.rates))
        g1 = float(np.sum(self.coeffs / self.rates**2))
        return total, g1

    def to_dict(self):
        return {"form": "expsum", "terms": [[float(c), float(r)] for c, r in
                                            zip(self.coeffs, self.rates)],
                "gamma": float(self.gamma)}


@dataclass(frozen=True, eq=False)
class DelayCombKernel(MemoryKernel):
    """``Gamma = sum_j weights[j] delta_{delays[j]}`` with ``sum weights = 1``."""

    weights_: np.ndarray
    delays: np.ndarray
    gamma: float = 1.0
    form = "delay"

    def __call__(self, tau):
        # a measure has no pointwise density; report zero away from the atoms
        return np.zeros_like(np.asarray(tau, dtype=float))

    def cdf(self, tau):
        tau = np.asarray(tau, dtype=float)
        return (np.greater_equal.outer(tau, self.delays)) @ self.weights_

    def tail_mass(self, tau):
        return float(self.weights_[self.delays > tau].sum())

    def tau_max(self, tail_tol=DEFAULT_TAIL_TOL):
        return float(self.delays.max())

    def interval_moments(self, delta, n):
        i0 = np.zeros(n)
        i1 = np.zeros(n)
        j = np.floor(self.delays / delta).astype(int)
        inside = j < n
        np.add.at(i0, j[inside], self.weights_[inside])
        np.add.at(i1, j[inside], self.weights_[inside] * (self.delays[inside] - j[inside] * delta))
        return i0, i1

    def moments(self):
        return float(self.weights_.sum()), float(self.weights_ @ self.delays)

    def to_dict(self):
        return {"form": "delay",
                "taps": [[float(self.gamma * w), float(d)] for w, d in
                         zip(self.weights_, self.delays)]}


@dataclass(frozen=True, eq=False)
class TabulatedKernel(MemoryKernel):
    """Piecewise-linear profile on ``taus`` followed by ``values[-1] exp(-tail_rate (tau - taus[-1]))``."""

    taus: np.ndarray
    values: np.ndarray
    tail_rate: float
    gamma: float = 1.0
    form = "tabulated"

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        t_end = self.taus[-1]
        inner = np.interp(tau, self.taus, self.values)
        tail = self.values[-1] * np.exp(-self.tail_rate * np.maximum(tau - t_end, 0.0))
        return np.where(tau <= t_end, inner, tail)

    def _table_cdf(self):
        seg = 0.5 * np.diff(self.taus) * (self.values[1:] + self.values[:-1])
        return np.concatenate(([0.0], np.cumsum(seg)))

    def cdf(self, tau):
        tau = np.asarray(tau, dtype=float)
        c = self._table_cdf()
        t = np.clip(tau, self.taus[0], self.taus[-1])
        k = np.clip(np.searchsorted(self.taus, t, side="right") - 1, 0, self.taus.size - 2)
        dt = t - self.taus[k]
        slope = (self.values[k + 1] - self.values[k]) / (self.taus[k + 1] - self.taus[k])
        inner = c[k] + self.values[k] * dt + 0.5 * slope * dt**2
        excess = np.maximum(tau - self.taus[-1], 0.0)
        tail = self.values[-1] / self.tail_rate * -np.expm1(-self.tail_rate * excess)
        return inner + tail

    def interval_moments(self, delta, n):
        i0 = np.empty(n)
        i1 = np.empty(n)
        t_end = self.taus[-1]
        for j in range(n):
            a, b = j * delta, (j + 1) * delta
            # exact Simpson on each linear piece (integrands are at most quadratic)
            lo, hi = a, min(b, t_end)
            s0 = s1 = 0.0
            if hi > lo:
                inner = self.taus[(self.taus > lo) & (self.taus < hi)]
                pts = np.concatenate(([lo], inner, [hi]))
                p, q = pts[:-1], pts[1:]
                m = 0.5 * (p + q)
                gp, gm, gq = self(p), self(m), self(q)
                wgt = (q - p) / 6.0
                s0 += float(np.sum(wgt * (gp + 4 * gm + gq)))
                s1 += float(np.sum(wgt * (gp * (p - a) + 4 * gm * (m - a) + gq * (q - a))))
            if b > t_end:
                lo2 = max(a, t_end)
                r = self.tail_rate
                g_lo = self.values[-1] * math.exp(-r * (lo2 - t_end))
                L = b - lo2
                e0 = -math.expm1(-r * L) / r
                e1 = (-math.expm1(-r * L) - r * L * math.exp(-r * L)) / r**2
                s0 += g_lo * e0
                s1 += g_lo * (e1 + (lo2 - a) * e0)
            i0[j], i1[j] = s0, s1
        return i0, i1

    def moments(self):
        if not self.tail_rate > 0:
            raise DivergentMoment("tail extrapolation rate must be positive")
        t_end = self.taus[-1]
        total, _ = integrate.quad(lambda s: float(self(s)), 0.0, t_end,
                                  points=self.taus[1:-1][:50], limit=500,
                                  epsabs=1e-14, epsrel=1e-13)
        g1, _ = integrate.quad(lambda s: s * float(self(s)), 0.0, t_end,
                               points=self.taus[1:-1][:50], limit=500,
                               epsabs=1e-14, epsrel=1e-13)
        r, g_end = self.tail_rate, self.values[-1]
        total += g_end / r
        g1 += g_end * (t_end / r + 1.0 / r**2)
        return float(total), float(g1)

    def to_dict(self):
        return {"form": "tabulated", "tau": self.taus.tolist(), "values": self.values.tolist(),
                "tail_rate": float(self.tail_rate), "gamma": float(self.gamma)}


# ------------------------------------------------------------------ builders

def _check_expsum_nonnegative(coeffs, rates):
    scale = float(np.sum(np.abs(coeffs)))
    lam_min = float(rates.min())
    tau = np.concatenate(([0.0], np.geomspace(1e-6 / rates.max(), 50.0 / lam_min, 10_000)))
    vals = np.exp(-np.multiply.outer(tau, rates)) @ coeffs
    if vals.min() < -1e-12 * scale:
        k = int(np.argmin(vals))
        raise NegativeKernel(f"kernel is negative at tau={tau[k]:.6g} (value {vals[k]:.3g})")
    # asymptotic sign: the slowest rate with a nonvanishing coefficient must dominate positively
    order = np.unique(rates)
    for lam in order:
        c = float(coeffs[rates == lam].sum())
        if abs(c) > 1e-14 * scale:
            if c < 0:
                raise NegativeKernel(f"slowest-decaying term (rate {lam}) has negative weight")
            break


def _merge_rates(coeffs, rates):
    rates_u, inv = np.unique(rates, return_inverse=True)
    merged = np.zeros(rates_u.size)
    np.add.at(merged, inv, coeffs)
    return merged, rates_u


def expsum(terms, gamma):
    """Exponential-sum kernel from raw ``(c_i, lam_i)`` pairs; the profile is rescaled to unit mass."""
    terms = np.asarray(terms, dtype=float).reshape(-1, 2)
    coeffs, rates = terms[:, 0], terms[:, 1]
    if np.any(rates <= 0):
        raise ValueError("decay rates must be positive")
    coeffs, rates = _merge_rates(coeffs, rates)
    mass = float(np.sum(coeffs / rates))
    if mass == 0.0:
        raise ZeroWeight("exponential sum has zero mass")
    _check_expsum_nonnegative(coeffs / mass, rates)
    return ExpSumKernel(coeffs / mass, rates, float(gamma)).validate()


def from_pde_ode(couplings):
    """Kernel of the linear ODE coupling ``w_i' = -lam_i w_i + b_i u`` fed back as ``sum a_i w_i``.

    ``couplings`` is a sequence of ``(a_i, b_i, lam_i)``.  The weight is
    ``gamma = sum a_i b_i / lam_i`` and the profile ``sum a_i b_i exp(-lam_i tau) / gamma``.
    """
    arr = np.asarray(couplings, dtype=float).reshape(-1, 3)
    a, b, lam = arr.T
    if np.any(lam <= 0):
        raise ValueError("decay rates must be positive")
    prod = a * b
    gamma = float(np.sum(prod / lam))
    scale = float(np.sum(np.abs(prod / lam)))
    if scale == 0.0 or abs(gamma) <= 1e-14 * scale:
        raise ZeroWeight("sum a_i b_i / lam_i vanishes")
    coeffs, rates = _merge_rates(prod / gamma, lam)
    _check_expsum_nonnegative(coeffs, rates)
    return ExpSumKernel(coeffs, rates, gamma).validate()


def exponential(rate=1.0, gamma=1.0):
    """Single exponential ``rate * exp(-rate tau)`` with weight ``gamma`` (``gamma = 0`` allowed)."""
    return ExpSumKernel(np.array([float(rate)]), np.array([float(rate)]), float(gamma))


def delay_comb(taps):
    """Discrete delays from ``(gamma_j, tau_j)`` pairs with ``gamma_j > 0``."""
    arr = np.asarray(taps, dtype=float).reshape(-1, 2)
    g, d = arr.T
    if np.any(g <= 0):
        raise NegativeKernel("delay weights must be positive")
    if np.any(d <= 0):
        raise ValueError("delays must be positive")
    gamma = float(g.sum())
    return DelayCombKernel(g / gamma, d, gamma).validate()


def tabulated(taus, values, tail_rate, gamma):
    """Tabulated profile, rescaled to unit mass."""
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    if taus.ndim != 1 or taus.size < 2 or taus.shape != values.shape:
        raise ValueError("need matching 1-D tau and value arrays with at least two points")
    if taus[0] != 0.0 or np.any(np.diff(taus) <= 0):
        raise ValueError("tau grid must start at 0 and increase strictly")
    if not tail_rate > 0:
        raise DivergentMoment("tail extrapolation rate must be positive")
    if np.any(values < 0):
        raise NegativeKernel("tabulated kernel has negative samples")
    raw = TabulatedKernel(taus, values, float(tail_rate), float(gamma))
    mass, _ = raw.moments()
    if mass <= 0:
        raise ZeroWeight("tabulated kernel has zero mass")
    return TabulatedKernel(taus, values / mass, float(tail_rate), float(gamma)).validate()


def from_dict(block):
    """Build a kernel from its JSON block (see docs/config.md)."""
    form = block.get("form")
    if form == "expsum":
        return expsum(block["terms"], block.get("gamma", 1.0))
    if form == "pde_ode":
        return from_pde_ode(block["couplings"])
    if form == "delay":
        return delay_comb(block["taps"])
    if form == "tabulated":
        return tabulated(block["tau"], block["values"], block["tail_rate"], block.get("gamma", 1.0))
    raise ValueError(f"unknown kernel form {form!r}")


def with_gamma(kernel, gamma):
    """Same normalized profile, different total weight."""
    if isinstance(kernel, ExpSumKernel):
        return ExpSumKernel(kernel.coeffs, kernel.rates, float(gamma))
    if isinstance(kernel, DelayCombKernel):
        return DelayCombKernel(kernel.weights_, kernel.delays, float(gamma))
    if isinstance(kernel, TabulatedKernel):
        return TabulatedKernel(kernel.taus, kernel.values, kernel.tail_rate, float(gamma))
    raise TypeError(type(kernel))


def moments(kernel):
    return kernel.moments()


def convolve_history(kernel, history, dt, depth=None, tail_tol=DEFAULT_TAIL_TOL):
    """Approximate ``int_0^inf Gamma(tau) u(t - tau) dtau`` from samples.

    ``history[j]`` holds ``u(t - j dt)`` (scalars or arrays along the first axis).
    Uses the product trapezoid rule on ``[0, depth]``; the tail beyond ``depth``
    is charged to the oldest sample used.
    """
    history = np.asarray(history, dtype=float)
    if depth is None:
        depth = kernel.tau_max(tail_tol)
    w = kernel.weights(dt, depth)
    if history.shape[0] < w.size:
        raise InsufficientHistory(
            f"need {w.size} samples to reach depth {depth}, got {history.shape[0]}")
    return np.tensordot(w, history[: w.size], axes=1)
