"""Prolate spheroidal reduction of two-focus integrals.

For foci x, y at distance rho and r1 = |z - x|, r2 = |z - y|,

    int f(z) dz / (r1 r2) = 1/(2 rho) int_rho^inf dsig int_{-rho}^{rho} dtau int_0^{2pi} dphi f

with sig = r1 + r2, tau = r1 - r2.  Both Coulomb singularities disappear,
which makes this the workhorse for the first Born term and for the squared
resolvent norms.
"""
from __future__ import annotations

import functools
import math

import numpy as np


def _frame(e):
    helper = np.array([0.0, 0.0, 1.0]) if abs(e[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(helper, e)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(e, e1)


@functools.lru_cache(maxsize=32)
def gauss(n):
    return np.polynomial.legendre.leggauss(n)


def panel_rule(a, b, n_panels, order):
    x, w = gauss(order)
    e = np.linspace(a, b, n_panels + 1)
    lo, hi = e[:-1, None], e[1:, None]
    return (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel(), (0.5 * (hi - lo) * w).ravel()


def graded_rule(a, b, n_base, order, points=(), levels=8, ratio=0.3):
    """Composite Gauss rule on [a, b] with panels shrinking geometrically toward ``points``."""
    edges = list(np.linspace(a, b, n_base + 1))
    h0 = (b - a) / n_base
    for c in points:
        if a <= c <= b:
            edges.append(c)
            for k in range(levels + 1):
                d = h0 * ratio ** k
                edges += [max(a, c - d), min(b, c + d)]
    e = np.unique(np.asarray(edges))
    x, w = gauss(order)
    lo, hi = e[:-1, None], e[1:, None]
    return (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel(), (0.5 * (hi - lo) * w).ravel()


def singular_points(V):
    """Points where V is unbounded (the origin for singular radial profiles)."""
    if V.radial and V.bound is None and not V.is_zero:
        return [np.zeros(3)]
    return []


def _prolate_coordinates(x, y, p):
    """(sigma, tau, phi) of the point p for foci x, y."""
    d = y - x
    rho = float(np.linalg.norm(d))
    e = d / rho
    e1, e2 = _frame(e)
    r1, r2 = float(np.linalg.norm(p - x)), float(np.linalg.norm(p - y))
    q = p - 0.5 * (x + y)
    return r1 + r2, r1 - r2, math.atan2(float(q @ e2), float(q @ e1))


def shell_integrand(V, x, y, sigma, n_tau=24, n_phi=24, tau_panels=1, tau_rule=None,
                    phi_rule=None):
    """G(sigma) = int_{-rho}^{rho} dtau int_0^{2pi} dphi V(z(sigma, tau, phi)).

    ``sigma`` is a 1D array of values >= rho.  Explicit (nodes, weights) rules
    for tau and phi override the default Gauss / trapezoid rules.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = y - x
    rho = float(np.linalg.norm(d))
    e = d / rho
    e1, e2 = _frame(e)
    mid = 0.5 * (x + y)
    tau, wt = tau_rule if tau_rule is not None else panel_rule(-rho, rho, tau_panels, n_tau)
    if phi_rule is None:
        phi = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
        wphi = np.full(n_phi, 2 * np.pi / n_phi)
    else:
        phi, wphi = phi_rule
    ring = np.cos(phi)[:, None] * e1[None, :] + np.sin(phi)[:, None] * e2[None, :]
    sigma = np.asarray(sigma, dtype=float)
    out = np.empty(sigma.size)
    chunk = max(1, 200000 // (tau.size * phi.size))
    for a in range(0, sigma.size, chunk):
        sig = sigma[a:a + chunk, None]
        s = sig * tau[None, :] / (2 * rho)
        r1 = 0.5 * (sig + tau[None, :])
        t = np.sqrt(np.maximum(r1 * r1 - (s + 0.5 * rho) ** 2, 0.0))
        base = mid[None, None, :] + s[..., None] * e[None, None, :]
        pts = base[:, :, None, :] + t[..., None, None] * ring[None, None, :, :]
        out[a:a + chunk] = (V.evaluate(pts) @ wphi) @ wt
    return out


def sigma_limit(V, x, y):
    """Largest r1 + r2 over z in the effective support of V."""
    R = V.support_radius if V.support_radius is not None else V.r_eff
    return float(np.linalg.norm(x) + np.linalg.norm(y) + 2 * R)


def sigma_lower(V, x, y):
    """Smallest r1 + r2 over z in the effective support (can exceed rho)."""
    rho = float(np.linalg.norm(np.asarray(y) - np.asarray(x)))
    R = V.support_radius if V.support_radius is not None else V.r_eff
    # a point of the support ball is at least dist(x, ball) + dist(y, ball) away
    dx = max(0.0, float(np.linalg.norm(x)) - R)
    dy = max(0.0, float(np.linalg.norm(y)) - R)
    return max(rho, dx + dy)


def two_focus_integral(V, x, y, weight, tol=1e-5, n_panels=16, order=8, n_tau=2,
                       n_phi=4, max_doublings=2, sigma_max=None):
    """int V(z) weight(r1 + r2) / (r1 r2) dz, converged by panel doubling.

    Returns (value, error estimate).  ``weight`` maps an array of sigma values
    to reals; ``sigma_max`` cuts the sigma range where the weight is known to
    be negligible.  ``n_panels`` base panels in sigma, ``n_tau`` in tau and
    ``n_phi`` in phi are graded toward the prolate image of any singular point
    of V and all doubled per refinement level.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rho = float(np.linalg.norm(y - x))
    lo, hi = sigma_lower(V, x, y), sigma_limit(V, x, y)
    if sigma_max is not None:
        hi = min(hi, sigma_max)
    if hi <= lo:
        return 0.0, 0.0
    sing = [_prolate_coordinates(x, y, p) for p in singular_points(V)]
    sig_pts = [c[0] for c in sing]
    tau_pts = [c[1] for c in sing]
    phi0 = sing[0][2] if sing else 0.0
    prev = None
    for level in range(max_doublings + 1):
        k = 2 ** level
        sig, ws = graded_rule(lo, hi, n_panels * k, order, sig_pts, levels=3 + 2 * level)
        tau_rule = graded_rule(-rho, rho, n_tau * k, order, tau_pts, levels=3 + 2 * level)
        phi_rule = graded_rule(phi0 - np.pi, phi0 + np.pi, n_phi * k, order,
                               [phi0] if sing else [], levels=3 + 2 * level)
        G = shell_integrand(V, x, y, sig, tau_rule=tau_rule, phi_rule=phi_rule)
        val = float(np.dot(ws, weight(sig) * G)) / (2 * rho)
        if prev is not None and abs(val - prev) <= tol * max(abs(val), 1e-300):
            return val, abs(val - prev)
        prev = val
    return val, abs(val - prev)


def coincident_integral(V, x, weight, tol=1e-5, n_panels=16, order=8, n_mu=4, n_phi=8,
                        max_doublings=2, sigma_max=None):
    """Limit y -> x: int V(z) weight(2 r) / r^2 dz in spherical coordinates about x.

    The polar axis points from x to the origin, and the radial and polar rules
    are graded toward the origin when V is singular there.
    """
    x = np.asarray(x, dtype=float)
    R = V.support_radius if V.support_radius is not None else V.r_eff
    hi = float(np.linalg.norm(x) + R)
    if sigma_max is not None:
        hi = min(hi, 0.5 * sigma_max)
    a = float(np.linalg.norm(x))
    e3 = -x / a if a > 0 else np.array([0.0, 0.0, 1.0])
    e1, e2 = _frame(e3)
    sing = bool(singular_points(V)) and a > 0
    prev = None
    for level in range(max_doublings + 1):
        k = 2 ** level
        lev = 3 + 2 * level
        r, wr = graded_rule(0.0, hi, n_panels * k, order, [a] if sing else [], levels=lev)
        mu, wmu = graded_rule(-1.0, 1.0, n_mu * k, order, [1.0] if sing else [], levels=lev)
        phi, wphi = graded_rule(0.0, 2 * np.pi, n_phi * k, order)
        st = np.sqrt(1 - mu * mu)
        dirs = (st[:, None, None] * (np.cos(phi)[None, :, None] * e1 + np.sin(phi)[None, :, None]
                                     * e2) + mu[:, None, None] * e3).reshape(-1, 3)
        wd = np.outer(wmu, wphi).ravel()
        ang = np.array([V.evaluate(x[None, :] + rr * dirs) @ wd for rr in r])
        val = float(np.dot(wr, weight(2 * r) * ang))
        if prev is not None and abs(val - prev) <= tol * max(abs(val), 1e-300):
            return val, abs(val - prev)
        prev = val
    return val, abs(val - prev)


@functools.lru_cache(maxsize=16)
def _lagrange_to_monomial(order):
    t, _ = gauss(order)
    return np.linalg.inv(np.vander(t, order, increasing=True))


def filon_weights(order, omega):
    """W_k(omega) = int_{-1}^{1} e^{i omega t} l_k(t) dt for the Gauss-node Lagrange basis.

    ``omega`` may be an array; the result has shape omega.shape + (order,).
    Monomial moments come from the forward recurrence
    mu_j = (e^{i w} - (-1)^j e^{-i w}) / (i w) - j mu_{j-1} / (i w), stable for
    |w| > 2 order; smaller |w| uses a 64-point Gauss rule.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    mu = np.empty(omega.shape + (order,), dtype=complex)
    big = np.abs(omega) > 2 * order
    if np.any(~big):
        xq, wq = gauss(64)
        w = omega[~big]
        e = np.exp(1j * w[:, None] * xq[None, :]) * wq[None, :]
        mu[~big] = e @ np.vander(xq, order, increasing=True)
    if np.any(big):
        w = omega[big]
        ep, em = np.exp(1j * w), np.exp(-1j * w)
        m = 2 * np.sin(w) / w
        mu[big, 0] = m
        for j in range(1, order):
            m = (ep - (-1) ** j * em) / (1j * w) - j * m / (1j * w)
            mu[big, j] = m
    # W_k = sum_j mu_j c_{jk} where l_k(t) = sum_j c_{jk} t^j
    return mu @ _lagrange_to_monomial(order)
