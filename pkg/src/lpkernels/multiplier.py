"""Dyadic bump, odd profile transforms, W^{m,1} norms and translated partitions.

Conventions
-----------
chi is supported in [1/2, 2] with sum_{N in 2^Z} chi(lam / N) = 1 on (0, inf).
The odd profile is phi(lam) = lam chi(lam) for lam >= 0, extended oddly, and
phi_N(lam) = phi(lam / N).  Its transform has no 2 pi factor,

    check(phi_N)(sigma) = int phi_N(lam) e^{i lam sigma} dlam = i F_N(sigma),
    F_N(sigma) = int phi_N(lam) sin(lam sigma) dlam = N F_1(N sigma),

so only the real odd function F_N is ever stored.  With a Sobolev exponent s
the base profile chi(u) is replaced by u^{-s} chi(u).
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import DerivativeOrderError

SUPPORT = (0.5, 2.0)
# flat zone of the mollifier: e^{-1/s} underflows for s below this
_FLAT = 1.2e-3


# ---------------------------------------------------------------------------
# truncated Taylor jets: arrays of shape (K + 1, n) holding f^{(k)} / k!


def _jet_mul(a, b):
    K = a.shape[0]
    out = np.zeros_like(a)
    for k in range(K):
        out[k] = np.sum(a[: k + 1] * b[k::-1], axis=0)
    return out


def _jet_recip(a):
    out = np.zeros_like(a)
    out[0] = 1.0 / a[0]
    for k in range(1, a.shape[0]):
        out[k] = -out[0] * np.sum(a[1 : k + 1] * out[k - 1 :: -1][:k], axis=0)
    return out


def _jet_exp(a):
    out = np.zeros_like(a)
    out[0] = np.exp(a[0])
    for k in range(1, a.shape[0]):
        j = np.arange(1, k + 1)[:, None]
        out[k] = np.sum(j * a[1 : k + 1] * out[k - 1 :: -1][:k], axis=0) / k
    return out


def _mollifier_jet(s_jet):
    """Jet of h(s) = g(s) / (g(s) + g(1 - s)), g(t) = e^{-1/t}, for s in (0, 1)."""
    s0 = s_jet[0]
    out = np.zeros_like(s_jet)
    low, high = s0 <= _FLAT, s0 >= 1 - _FLAT
    out[0, high] = 1.0
    mid = ~(low | high)
    if not np.any(mid):
        return out
    sj = s_jet[:, mid]
    one = np.zeros_like(sj)
    one[0] = 1.0
    # w = 1/s - 1/(1-s); h = 1 / (1 + e^{w}) evaluated without overflow
    w = _jet_recip(sj) - _jet_recip(one - sj)
    pos = w[0] > 0
    h = np.empty_like(sj)
    if np.any(pos):
        e = _jet_exp(-w[:, pos])
        h[:, pos] = _jet_mul(e, _jet_recip(one[:, pos] + e))
    if np.any(~pos):
        e = _jet_exp(w[:, ~pos])
        h[:, ~pos] = _jet_recip(one[:, ~pos] + e)
    out[:, mid] = h
    return out


def _linear_jet(value, slope, order):
    out = np.zeros((order + 1, value.size))
    out[0] = value
    if order >= 1:
        out[1] = slope
    return out


def bump_jet(u, order: int, sobolev_s: Optional[float] = None):
    """Jet (order + 1, n) of the base profile u^{-s} chi(u) at points u."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.zeros((order + 1, u.size))
    left = (u > SUPPORT[0]) & (u <= 1.0)
    right = (u > 1.0) & (u < SUPPORT[1])
    if np.any(left):
        # chi = Theta(u) - Theta(2u) = 1 - h(2 - 2u) on [1/2, 1]
        j = -_mollifier_jet(_linear_jet(2 - 2 * u[left], -2.0, order))
        j[0] += 1.0
        out[:, left] = j
    if np.any(right):
        out[:, right] = _mollifier_jet(_linear_jet(2 - u[right], -1.0, order))
    if sobolev_s:
        pw = np.zeros_like(out)
        coef = 1.0
        for k in range(order + 1):
            pw[k] = coef * u ** (-sobolev_s - k)
            coef *= (-sobolev_s - k) / (k + 1)
        out = _jet_mul(out, pw)
    return out


def bump_derivative(u, k: int, sobolev_s: Optional[float] = None):
    """k-th derivative of the base profile (exact up to rounding)."""
    return math.factorial(k) * bump_jet(u, k, sobolev_s)[k]


def chi(u):
    """The standard dyadic bump, supported in [1/2, 2]."""
    return bump_jet(u, 0)[0].reshape(np.shape(u))


# ---------------------------------------------------------------------------
# profile


@dataclass(frozen=True)
class MultiplierProfile:
    """chi (optionally times u^{-s}) at dyadic scale N, with a linear amplitude."""

    N: float = 1.0
    sobolev_s: Optional[float] = None
    amplitude: float = 1.0
    derivative_order_max: int = 8

    def __post_init__(self):
        if self.N <= 0:
            raise ValueError("N must be positive")
        if self.sobolev_s is not None and not 0 < self.sobolev_s < 3:
            raise ValueError("sobolev_s must lie in (0, 3)")

    def base(self, u):
        """Base profile p(u) = amplitude u^{-s} chi(u)."""
        u = np.asarray(u, dtype=float)
        return self.amplitude * bump_jet(u.ravel(), 0, self.sobolev_s)[0].reshape(u.shape)

    def chi(self, lam):
        """chi(lam / N) (the bump itself, ignoring s and amplitude)."""
        lam = np.asarray(lam, dtype=float)
        return chi(lam / self.N)

    def multiplier(self, lam):
        """Spectral weight m(lam) = amplitude lam^{-s} chi(lam / N) on lam >= 0."""
        lam = np.asarray(lam, dtype=float)
        s = self.sobolev_s or 0.0
        return self.N ** (-s) * self.base(lam / self.N)

    def phi(self, lam):
        """Odd profile phi(lam) = lam p(lam), extended oddly (unscaled)."""
        lam = np.asarray(lam, dtype=float)
        return np.sign(lam) * np.abs(lam) * self.base(np.abs(lam))

    def phi_N(self, lam):
        return self.phi(np.asarray(lam, dtype=float) / self.N)

    def at_scale(self, N: float) -> "MultiplierProfile":
        return MultiplierProfile(N, self.sobolev_s, self.amplitude, self.derivative_order_max)

    def with_amplitude(self, a: float) -> "MultiplierProfile":
        return MultiplierProfile(self.N, self.sobolev_s, a, self.derivative_order_max)

    def key(self) -> tuple:
        return (self.sobolev_s, self.amplitude)


def make_bump(N: float = 1.0, sobolev_s: Optional[float] = None,
              amplitude: float = 1.0, derivative_order_max: int = 8) -> MultiplierProfile:
    return MultiplierProfile(N, sobolev_s, amplitude, derivative_order_max)


def dyadic_partition_sum(lam, N_min: float, N_max: float):
    """sum of chi(lam / N) over dyadic N in [N_min, N_max]."""
    lam = np.asarray(lam, dtype=float)
    k0, k1 = int(round(math.log2(N_min))), int(round(math.log2(N_max)))
    return sum(chi(lam / 2.0 ** k) for k in range(k0, k1 + 1))


# ---------------------------------------------------------------------------
# quadrature helpers on the support


@functools.lru_cache(maxsize=8)
def _support_rule(panels_per_half: int = 64, order: int = 16):
    """Composite Gauss rule on [1/2, 1] and [1, 2] (chi has a kink-free join at 1)."""
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in ((0.5, 1.0), (1.0, 2.0)):
        e = np.linspace(a, b, panels_per_half + 1)
        lo, hi = e[:-1, None], e[1:, None]
        nodes.append((0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel())
        weights.append((0.5 * (hi - lo) * w).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def moment(profile: MultiplierProfile, k: int) -> float:
    """int_0^inf u^k p(u) du for the base profile."""
    u, w = _support_rule()
    return float(np.dot(w, u ** k * profile.base(u)))


def sobolev_W_m1_norm(profile: MultiplierProfile, m: int) -> float:
    """sum_{k <= m} ||p^{(k)}||_{L^1} of the base profile (scale free)."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    if m > profile.derivative_order_max:
        raise DerivativeOrderError(
            f"derivative order {m} exceeds the stable maximum "
            f"{profile.derivative_order_max}; use a lower m")
    return float(sum(_derivative_l1(profile.sobolev_s, k) for k in range(m + 1))) * abs(
        profile.amplitude)


@functools.lru_cache(maxsize=64)
def _derivative_l1(sobolev_s, k):
    u, w = _support_rule(256, 16)
    return float(np.dot(w, np.abs(bump_derivative(u, k, sobolev_s))))


# ---------------------------------------------------------------------------
# F_N(sigma) = int phi_N(lam) sin(lam sigma) dlam


def _sine_rule(t_max: float, nodes_per_panel: int = 16):
    """Gauss nodes on the support with at least one panel per period at t_max."""
    n_per_half = max(48, int(math.ceil(1.5 * t_max / (2 * math.pi))) + 8)
    return _support_rule(n_per_half, nodes_per_panel)


def F1_direct(profile: MultiplierProfile, t) -> np.ndarray:
    """F_1(t) = 2 int_0^inf u p(u) sin(u t) du by oscillation-aware panel Gauss.

    Panel count grows with |t| so each period is covered by a 16-node panel;
    negative t uses oddness.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(t)
    a = np.abs(t)
    order = np.argsort(a)
    # group by required panel count to keep matrices small
    blocks = np.array_split(order, max(1, int(math.ceil(t.size / 512))))
    for idx in blocks:
        u, w = _sine_rule(float(a[idx].max()) if idx.size else 0.0)
        wu = 2.0 * w * u * profile.base(u)
        out[idx] = np.sin(np.outer(a[idx], u)) @ wu
    return np.sign(t) * out


def cosine_moment(profile: MultiplierProfile, sigma) -> np.ndarray:
    """int_R phi_N(lam) cos(lam sigma) dlam evaluated literally over both half-lines."""
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    u, w = _sine_rule(float(np.abs(sigma).max() * profile.N))
    lam = profile.N * u
    wl = profile.N * w
    pos = np.cos(np.outer(sigma, lam)) @ (wl * profile.phi_N(lam))
    neg = np.cos(np.outer(sigma, -lam)) @ (wl * profile.phi_N(-lam))
    return pos + neg


class F1Table:
    """Piecewise Chebyshev interpolant of F_1 on [0, t_max] (unit-width panels).

    F_1 is band-limited to frequencies in [1/2, 2], so degree 24 per unit
    panel reproduces the direct quadrature to rounding error.
    """

    def __init__(self, profile: MultiplierProfile, t_max: float = 400.0, degree: int = 24):
        self.profile = profile.at_scale(1.0)
        self.t_max = float(t_max)
        self.degree = degree
        n_pan = int(math.ceil(t_max))
        self.edges = np.arange(n_pan + 1, dtype=float)
        xc = np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))
        t_nodes = (0.5 * (self.edges[:-1, None] + self.edges[1:, None])
                   + 0.5 * xc[None, :])
        vals = F1_direct(self.profile, t_nodes.ravel()).reshape(t_nodes.shape)
        self.coef = np.array([C.chebfit(xc, v, degree) for v in vals])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        a = np.abs(t).ravel()
        out = np.empty_like(a)
        inside = a < self.t_max
        if np.any(inside):
            ai = a[inside]
            k = np.minimum(ai.astype(int), len(self.coef) - 1)
            x = 2.0 * (ai - self.edges[k]) - 1.0
            c = self.coef[k]
            # Clenshaw, vectorized over points
            b1 = np.zeros_like(x)
            b2 = np.zeros_like(x)
            for j in range(self.degree, 0, -1):
                b1, b2 = c[:, j] + 2 * x * b1 - b2, b1
            out[inside] = c[:, 0] + x * b1 - b2
        if np.any(~inside):
            out[~inside] = F1_direct(self.profile, a[~inside])
        return (np.sign(t).ravel() * out).reshape(t.shape)


@functools.lru_cache(maxsize=16)
def _cached_table(key):
    s, amp = key
    return F1Table(MultiplierProfile(1.0, s, amp))


def F1(profile: MultiplierProfile, t):
    """Fast F_1 evaluation through the cached Chebyshev table."""
    return _cached_table(profile.key())(t)


def phi_check_transform(profile: MultiplierProfile, sigma, fast: bool = False):
    """F_N(sigma) = int phi_N(lam) sin(lam sigma) dlam (check(phi_N) = i F_N).

    ``fast`` routes through the Chebyshev table; otherwise direct quadrature.
    """
    sigma = np.asarray(sigma, dtype=float)
    N = profile.N
    vals = F1(profile, N * sigma) if fast else F1_direct(profile, N * sigma.ravel()).reshape(
        sigma.shape)
    out = N * vals
    return out if out.ndim else float(out)


def small_sigma_constant(profile: MultiplierProfile) -> float:
    """Exact constant c with |F_N(sigma)| <= c N^2 |sigma| (from |sin t| <= |t|).

    c = int |u phi(u)| du = 2 int u^2 |p(u)| du.
    """
    u, w = _support_rule()
    return 2.0 * float(np.dot(w, u * u * np.abs(profile.base(u))))


def geometric_sigma_grid(N: float, per_decade: int = 40, lo: float = 1e-3, hi: float = 1e3):
    n = int(round(math.log10(hi / lo) * per_decade)) + 1
    return np.geomspace(lo, hi, n) / N


@dataclass(frozen=True)
class OddProfileTransform:
    profile: MultiplierProfile
    sigma: np.ndarray
    table: np.ndarray
    envelope_constants: dict

    @property
    def N(self):
        return self.profile.N

    def phi(self, lam):
        return self.profile.phi_N(lam)

    def rows(self):
        return [(self.N, float(s), float(f)) for s, f in zip(self.sigma, self.table)]


def envelope_constant(profile: MultiplierProfile, m: int, t=None) -> float:
    """Fitted C_m with |F_1(t)| <= C_m ||p||_{W^{m,1}} / t^m on the table grid."""
    t = geometric_sigma_grid(1.0) if t is None else np.asarray(t)
    F = np.abs(F1(profile, t))
    return float(np.max(F * t ** m) / sobolev_W_m1_norm(profile, m))


def tail_max(values):
    """Running max from the right: out[i] = max(values[i:])."""
    v = np.abs(np.asarray(values, dtype=float))
    return np.maximum.accumulate(v[::-1])[::-1]


def bracket_envelope_constant(profile: MultiplierProfile, k: int, t_max: float = 400.0,
                              samples: int = 20001) -> float:
    """Smallest C with sup_{tau >= t} |F_1(tau)| <= C ||p||_{W^{k,1}} <t>^{-k} on a fine grid.

    The running tail max makes this usable as a monotone majorant in sigma.
    """
    t = np.linspace(0.0, t_max, samples)
    E = tail_max(F1(profile, t))
    return float(np.max(E * (1 + t * t) ** (k / 2)) / sobolev_W_m1_norm(profile, k)) * (
        1 + 1e-6)


def make_transform(profile: MultiplierProfile, m_values=range(0, 6)) -> OddProfileTransform:
    sigma = geometric_sigma_grid(profile.N)
    table = phi_check_transform(profile, sigma, fast=True)
    consts = {m: envelope_constant(profile, m) for m in m_values}
    return OddProfileTransform(profile, sigma, np.asarray(table), consts)


def envelope(profile: MultiplierProfile, sigma, m: int, constants: dict):
    """min(small-sigma envelope, C_m N ||p||_{W^{m,1}} / (N sigma)^m)."""
    sigma = np.abs(np.asarray(sigma, dtype=float))
    N = profile.N
    small = small_sigma_constant(profile) * N * N * sigma
    with np.errstate(divide="ignore"):
        large = constants[m] * N * sobolev_W_m1_norm(profile, m) / (N * sigma) ** m
    return np.minimum(small, large)


# ---------------------------------------------------------------------------
# translated partition


def _plateau(t):
    """1 on |t| <= 1/3, 0 on |t| >= 2/3, with rho(t) + rho(t - 1) = 1 on [0, 1]."""
    a = np.abs(np.asarray(t, dtype=float))
    out = np.zeros_like(a)
    out[a <= 1 / 3] = 1.0
    mid = (a > 1 / 3) & (a < 2 / 3)
    s = 3 * a[mid] - 1
    out[mid] = 1.0 - _mollifier_jet(s[None, :])[0]
    return out


@dataclass(frozen=True)
class TranslatedPartition:
    delta: float

    def psi(self, lam):
        return _plateau(np.asarray(lam, dtype=float) / self.delta)

    def center(self, j: int) -> float:
        return j * self.delta

    def piece(self, lam, j: int):
        return self.psi(np.asarray(lam, dtype=float) - j * self.delta)

    def active_window(self, N: float):
        """Indices j whose translate meets [N/2, 2N] (support of chi_N).

        For dyadic N and delta with N >= 2 delta this is exactly
        N/(2 delta) <= j <= 2N/delta.  For smaller N the j = 0 translate also
        meets the band and is included.
        """
        lo = N / 2 / self.delta - 2 / 3
        hi = 2 * N / self.delta + 2 / 3
        j0 = max(0, int(math.floor(lo)) + 1)
        j1 = int(math.ceil(hi)) - 1
        return list(range(j0, j1 + 1))

    def sum(self, lam, js=None):
        lam = np.asarray(lam, dtype=float)
        if js is None:
            top = int(math.ceil(np.max(np.abs(lam)) / self.delta)) + 2
            js = range(-top, top + 1)
        return sum(self.piece(lam, j) for j in js)


def make_translated_partition(delta: float) -> TranslatedPartition:
    if delta <= 0:
        raise ValueError("delta must be positive")
    return TranslatedPartition(float(delta))
