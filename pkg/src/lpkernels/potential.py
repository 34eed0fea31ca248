"""Potentials on R^3, global Kato norms, K0 truncations and chain-integral bounds.

The global Kato norm is ``sup_x int |V(y)| / |x - y| dy``.  For radial V the
shell theorem reduces the integral at a center of radius ``a`` to

    K(a) = 4 pi [ (1/a) int_0^a r^2 |V(r)| dr + int_a^inf r |V(r)| dr ],

which is what every radial routine below evaluates.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import InvariantViolation, NotKatoClassError, TruncationError

FOUR_PI = 4.0 * math.pi
KATO_OVERFLOW = 1e12

RadialFn = Callable[[np.ndarray], np.ndarray]


def _smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1 (e^{-1/s} mollifier)."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        t = 1.0 - s
        b = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        out = a / (a + b)
    return np.where(s <= 0, 0.0, np.where(s >= 1, 1.0, out))


@dataclass(frozen=True)
class PotentialModel:
    """An evaluable potential on R^3.

    Radial potentials carry a vectorized ``profile`` r -> V(r); general ones a
    ``field_fn`` mapping (..., 3) arrays to values.  ``r_eff`` is the radius
    beyond which |V| is negligible (equal to ``support_radius`` when set) and
    ``breakpoints`` lists radii where the profile is not smooth.
    """

    kind: str
    name: str
    radial: bool = True
    profile: Optional[RadialFn] = None
    field_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    support_radius: Optional[float] = None
    r_eff: float = 0.0
    breakpoints: tuple = ()
    monotone: bool = False
    bound: Optional[float] = None
    params: dict = dataclasses.field(default_factory=dict)
    sign_split: Optional[tuple] = None
    closed_form_kato: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("radial-analytic", "radial-tabulated", "zero", "general"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.radial and self.profile is None and self.kind != "zero":
            raise ValueError("radial potential needs a profile")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def radial_profile(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.is_zero:
            return np.zeros_like(r)
        if not self.radial:
            raise ValueError("radial_profile requested for a non-radial potential")
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            v = np.asarray(self.profile(r), dtype=float)
        v = np.broadcast_to(v, r.shape).copy()
        if self.support_radius is not None:
            v[r > self.support_radius] = 0.0
        return v

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_zero:
            return np.zeros(x.shape[:-1])
        if self.radial:
            return self.radial_profile(np.linalg.norm(x, axis=-1))
        v = np.asarray(self.field_fn(x), dtype=float)
        if self.support_radius is not None:
            v = np.where(np.linalg.norm(x, axis=-1) > self.support_radius, 0.0, v)
        return v

    __call__ = evaluate

    def scaled(self, c: float) -> "PotentialModel":
        c = float(c)
        if self.is_zero or c == 0.0:
            return zero_potential()
        prof = None if self.profile is None else (lambda r, f=self.profile: c * f(r))
        fld = None if self.field_fn is None else (lambda x, f=self.field_fn: c * f(x))
        params = dict(self.params)
        params["scale"] = params.get("scale", 1.0) * c
        return PotentialModel(
            kind=self.kind, name=self.name, radial=self.radial, profile=prof, field_fn=fld,
            support_radius=self.support_radius, r_eff=self.r_eff,
            breakpoints=self.breakpoints, monotone=self.monotone,
            bound=None if self.bound is None else abs(c) * self.bound, params=params,
            closed_form_kato=None if self.closed_form_kato is None
            else abs(c) * self.closed_form_kato,
        )

    def __neg__(self):
        return self.scaled(-1.0)

    def __add__(self, other: "PotentialModel") -> "PotentialModel":
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        supp = None
        if self.support_radius is not None and other.support_radius is not None:
            supp = max(self.support_radius, other.support_radius)
        params = {"sum": [self.fingerprint(), other.fingerprint()]}
        if self.radial and other.radial:
            f, g = self.radial_profile, other.radial_profile
            return PotentialModel(
                kind="radial-analytic", name=f"{self.name}+{other.name}",
                profile=lambda r: f(r) + g(r), support_radius=supp,
                r_eff=max(self.r_eff, other.r_eff),
                breakpoints=tuple(sorted(set(self.breakpoints) | set(other.breakpoints))),
                params=params,
            )
        f, g = self.evaluate, other.evaluate
        return PotentialModel(
            kind="general", name=f"{self.name}+{other.name}", radial=False,
            field_fn=lambda x: f(x) + g(x), support_radius=supp,
            r_eff=max(self.r_eff, other.r_eff), params=params,
        )

    def absolute(self) -> "PotentialModel":
        if self.is_zero:
            return self
        if self.radial:
            f = self.radial_profile
            return PotentialModel(
                kind=self.kind, name=f"|{self.name}|", profile=lambda r: np.abs(f(r)),
                support_radius=self.support_radius, r_eff=self.r_eff,
                breakpoints=self.breakpoints, monotone=self.monotone, bound=self.bound,
                params={"abs": self.fingerprint()}, closed_form_kato=self.closed_form_kato,
            )
        f = self.evaluate
        return PotentialModel(
            kind="general", name=f"|{self.name}|", radial=False,
            field_fn=lambda x: np.abs(f(x)), support_radius=self.support_radius,
            r_eff=self.r_eff, bound=self.bound, params={"abs": self.fingerprint()},
        )

    def split_sign(self):
        """(V+, V-) with V = V+ - V-, both nonnegative."""
        if self.sign_split is not None:
            return self.sign_split
        if self.is_zero:
            return zero_potential(), zero_potential()
        ev = self.evaluate
        parts = []
        for sgn, tag in ((1.0, "+"), (-1.0, "-")):
            parts.append(PotentialModel(
                kind="general", name=f"{self.name}{tag}", radial=False,
                field_fn=lambda x, s=sgn: np.maximum(s * ev(x), 0.0),
                support_radius=self.support_radius, r_eff=self.r_eff,
                params={"part": tag, "of": self.fingerprint()},
            ))
        return tuple(parts)

    def fingerprint(self) -> str:
        """Stable content key used for caching and report provenance."""
        payload = json.dumps({"kind": self.kind, "name": self.name, "params": self.params,
                              "support": self.support_radius}, sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def describe(self) -> dict:
        return {"kind": self.kind, "name": self.name, "radial": self.radial,
                "support_radius": self.support_radius, "params": self.params,
                "fingerprint": self.fingerprint()}



# ---------------------------------------------------------------------------
# built-in library


def zero_potential() -> PotentialModel:
    return PotentialModel(kind="zero", name="zero", radial=True, support_radius=None,
                          r_eff=0.0, monotone=True, bound=0.0, params={},
                          closed_form_kato=0.0)


def ball_potential(amplitude: float = 1.0, radius: float = 1.0) -> PotentialModel:
    """amplitude * 1_{|x| <= radius}; Kato norm 2 pi |amplitude| radius^2."""
    a, R = float(amplitude), float(radius)
    return PotentialModel(
        kind="radial-analytic", name="ball",
        profile=lambda r: np.where(r <= R, a, 0.0),
        support_radius=R, r_eff=R, breakpoints=(R,), monotone=True, bound=abs(a),
        params={"amplitude": a, "radius": R},
        closed_form_kato=2 * math.pi * abs(a) * R * R,
    )


def gaussian_potential(amplitude: float = 1.0, width: float = 1.0) -> PotentialModel:
    """amplitude * exp(-|x|^2 / width^2); Kato norm 2 pi |amplitude| width^2."""
    a, w = float(amplitude), float(width)
    return PotentialModel(
        kind="radial-analytic", name="gaussian",
        profile=lambda r: a * np.exp(-(r / w) ** 2),
        r_eff=w * math.sqrt(40.0), monotone=True, bound=abs(a),
        params={"amplitude": a, "width": w},
        closed_form_kato=2 * math.pi * abs(a) * w * w,
    )


def yukawa_potential(amplitude: float = 1.0, mu: float = 1.0) -> PotentialModel:
    """amplitude * exp(-mu |x|) / |x|; Kato norm 4 pi |amplitude| / mu."""
    a, m = float(amplitude), float(mu)
    return PotentialModel(
        kind="radial-analytic", name="yukawa",
        profile=lambda r: a * np.exp(-m * r) / r,
        r_eff=40.0 / m, monotone=True, bound=None,
        params={"amplitude": a, "mu": m},
        closed_form_kato=FOUR_PI * abs(a) / m,
    )


def bump_potential(amplitude: float = 1.0, radius: float = 1.0) -> PotentialModel:
    """Smooth compactly supported radial bump, equal to amplitude for r <= radius/2."""
    a, R = float(amplitude), float(radius)
    return PotentialModel(
        kind="radial-analytic", name="bump",
        profile=lambda r: a * (1.0 - _smooth_step(2.0 * np.asarray(r) / R - 1.0)),
        support_radius=R, r_eff=R, breakpoints=(R / 2, R), monotone=True, bound=abs(a),
        params={"amplitude": a, "radius": R},
    )


def tabulated_potential(r_nodes: Sequence[float], values: Sequence[float],
                        name: str = "tabulated") -> PotentialModel:
    """Piecewise-linear radial profile; zero beyond the last node."""
    r_nodes = np.asarray(r_nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    if r_nodes.ndim != 1 or r_nodes.shape != values.shape or np.any(np.diff(r_nodes) <= 0):
        raise ValueError("tabulated potential needs increasing radii and matching values")
    R = float(r_nodes[-1])
    absv = np.abs(values)
    digest = hashlib.sha256(np.concatenate([r_nodes, values]).tobytes()).hexdigest()[:16]
    return PotentialModel(
        kind="radial-tabulated", name=name,
        profile=lambda r: np.interp(r, r_nodes, values, right=0.0),
        support_radius=R, r_eff=R, breakpoints=tuple(r_nodes[1:-1][::max(1, len(r_nodes) // 64)]),
        monotone=bool(np.all(np.diff(absv) <= 0)), bound=float(absv.max()),
        params={"table": digest},
    )


def general_potential(fn, name: str, support_radius: Optional[float] = None,
                      r_eff: float = 10.0, bound: Optional[float] = None) -> PotentialModel:
    """Wrap an arbitrary (..., 3) -> (...) callable as a non-radial potential."""
    return PotentialModel(kind="general", name=name, radial=False, field_fn=fn,
                          support_radius=support_radius,
                          r_eff=support_radius or r_eff, bound=bound,
                          params={"callable": getattr(fn, "__qualname__", repr(fn))})


BUILTINS = {
    "zero": lambda **kw: zero_potential(),
    "ball": ball_potential,
    "gaussian": gaussian_potential,
    "yukawa": yukawa_potential,
    "bump": bump_potential,
    "deep_well": lambda amplitude=-10.0, radius=1.0: ball_potential(amplitude, radius),
}


def make_potential(kind: str, **params) -> PotentialModel:
    try:
        factory = BUILTINS[kind]
    except KeyError:
        raise ValueError(f"unknown potential {kind!r}; choose from {sorted(BUILTINS)}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# Kato norm


@dataclass(frozen=True)
class KatoNormEstimate:
    value: float
    method: str
    candidate_centers: int
    quadrature_error: float
    argmax: tuple = (0.0, 0.0, 0.0)


def _quad(f, a, b, points, tol):
    if b <= a:
        return 0.0, 0.0
    pts = [p for p in points if a < p < b] or None
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, points=pts, epsabs=0.0, epsrel=tol, limit=400)
        except integrate.IntegrationWarning as exc:
            # retry once on subintervals before declaring divergence
            grid = np.unique(np.concatenate([[a], np.geomspace(max(a, 1e-12), b, 12)
                                             if a > 0 else np.geomspace(1e-12, b, 12), [b]]))
            grid = grid[(grid >= a) & (grid <= b)]
            val, err = 0.0, 0.0
            try:
                for lo, hi in zip(grid[:-1], grid[1:]):
                    v, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=tol, limit=400)
                    val, err = val + v, err + e
            except integrate.IntegrationWarning:
                raise NotKatoClassError(f"Kato integral did not converge: {exc}") from None
    if not np.isfinite(val) or abs(val) > KATO_OVERFLOW:
        raise NotKatoClassError(f"Kato integral exceeded overflow guard ({val!r})")
    return float(val), float(err)


def _radial_outer_limit(V: PotentialModel) -> float:
    if V.support_radius is not None:
        return float(V.support_radius)
    return float(V.r_eff)


def radial_kato_integral(V: PotentialModel, a: float, tol: float = 1e-10):
    """int |V(y)| / |x - y| dy for a radial V and |x| = a, with error estimate."""
    if V.is_zero:
        return 0.0, 0.0
    R = _radial_outer_limit(V)
    pts = list(V.breakpoints)
    absv = lambda r: abs(float(V.radial_profile(np.array(r))))
    if a <= 0.0:
        v, e = _quad(lambda r: r * absv(r), 0.0, R, pts, tol)
        return FOUR_PI * v, FOUR_PI * e
    inner_hi = min(a, R)
    v1, e1 = _quad(lambda r: r * r * absv(r), 0.0, inner_hi, pts, tol)
    v2, e2 = _quad(lambda r: r * absv(r), a, R, pts, tol) if a < R else (0.0, 0.0)
    return FOUR_PI * (v1 / a + v2), FOUR_PI * (e1 / a + e2)


def radial_kato_profile(V: PotentialModel, n_cells: int = 600, order: int = 8):
    """K(a) on a table of radii (cell edges) from cumulative Gauss sums.

    Used to locate the argmax cheaply before adaptive refinement.
    """
    R = _radial_outer_limit(V)
    edges = np.unique(np.concatenate([
        [0.0], np.geomspace(1e-4 * R, 0.05 * R, n_cells // 4),
        np.linspace(0.05 * R, R, n_cells), [b for b in V.breakpoints if 0 < b < R], [R]]))
    xg, wg = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    r = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * wg
    av = np.abs(V.radial_profile(r))
    A1 = np.concatenate([[0.0], np.cumsum(np.sum(w * r * av, axis=1))])
    A2 = np.concatenate([[0.0], np.cumsum(np.sum(w * r * r * av, axis=1))])
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.where(edges > 0, A2 / np.where(edges > 0, edges, 1.0), 0.0)
    return edges, FOUR_PI * (inner + A1[-1] - A1)


def _general_kato_integral(V: PotentialModel, center, tol: float, n_theta: int = 24):
    """Spherical coordinates about the center: int_{S^2} int_0^inf rho |V| drho dw."""
    c = np.asarray(center, dtype=float)
    mu, wmu = np.polynomial.legendre.leggauss(n_theta)
    n_phi = 2 * n_theta
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1 - mu ** 2)
    dirs = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)),
                     np.outer(mu, np.ones(n_phi))], axis=-1).reshape(-1, 3)
    wdir = np.outer(wmu, np.full(n_phi, 2 * np.pi / n_phi)).ravel()
    rho_max = np.linalg.norm(c) + _radial_outer_limit(V)

    def f(rho):
        return rho * float(np.dot(wdir, np.abs(V.evaluate(c + rho * dirs))))

    return _quad(f, 0.0, rho_max, [], tol)


def kato_norm(V: PotentialModel, centers=None, tol: float = 1e-9) -> KatoNormEstimate:
    """Global Kato norm as a max over candidate centers (a lower bound in general).

    For radial V with |V| nonincreasing the sup is attained at the origin.
    Otherwise a radius scan (radial V) or a 3D lattice (general V) is refined
    around its argmax.  ``centers`` overrides the candidate set.
    """
    if V.is_zero:
        return KatoNormEstimate(0.0, "closed-form", 1, 0.0)
    if centers is not None:
        pts = np.atleast_2d(np.asarray(centers, dtype=float))
        vals = [(_kato_at(V, p, tol), tuple(p)) for p in pts]
        (best, err), arg = max(vals, key=lambda t: t[0][0])
        return KatoNormEstimate(best, "numeric-sup", len(pts),
                                max(v[0][1] for v in vals), arg)
    if V.radial:
        if V.monotone:
            val, err = radial_kato_integral(V, 0.0, tol)
            return KatoNormEstimate(val, "numeric-sup", 1, err)
        radii, vals = radial_kato_profile(V)
        k = int(np.argmax(vals))
        lo, hi = radii[max(k - 1, 0)], radii[min(k + 1, len(radii) - 1)]
        best_a = radii[k]
        best = radial_kato_integral(V, best_a, tol)[0]
        count = len(radii)
        if hi > lo:
            res = optimize.minimize_scalar(lambda a: -radial_kato_integral(V, a, tol)[0],
                                           bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-6 * max(hi, 1e-3)})
            count += int(res.nfev)
            if -res.fun > best:
                best_a, best = float(res.x), float(-res.fun)
        err = radial_kato_integral(V, best_a, tol)[1]
        return KatoNormEstimate(float(best), "numeric-sup", count, err, (0.0, 0.0, best_a))
    R = _radial_outer_limit(V)
    ticks = np.linspace(-R, R, 5)
    lattice = np.stack(np.meshgrid(ticks, ticks, ticks, indexing="ij"), axis=-1).reshape(-1, 3)
    vals = [_general_kato_integral(V, p, tol) for p in lattice]
    k = int(np.argmax([v[0] for v in vals]))
    res = optimize.minimize(lambda p: -_general_kato_integral(V, p, tol)[0], lattice[k],
                            method="Nelder-Mead",
                            options={"xatol": 1e-3 * R, "fatol": 1e-8, "maxfev": 120})
    best, arg = vals[k][0], tuple(lattice[k])
    if -res.fun > best:
        best, arg = float(-res.fun), tuple(res.x)
    err = max(v[1] for v in vals)
    return KatoNormEstimate(float(best), "numeric-sup", len(lattice) + int(res.nfev), err, arg)


def _kato_at(V, p, tol):
    if V.radial:
        return radial_kato_integral(V, float(np.linalg.norm(p)), tol)
    return _general_kato_integral(V, p, tol)


def l1_norm(V: PotentialModel, tol: float = 1e-10) -> float:
    """Lebesgue L^1 norm of V on R^3."""
    if V.is_zero:
        return 0.0
    R = _radial_outer_limit(V)
    if V.radial:
        v, _ = _quad(lambda r: r * r * abs(float(V.radial_profile(np.array(r)))), 0.0, R,
                     list(V.breakpoints), tol)
        return FOUR_PI * v
    return _general_kato_integral(
        general_potential(lambda x: np.linalg.norm(x, axis=-1) * np.abs(V.evaluate(x)),
                          "r|V|", V.support_radius, V.r_eff), np.zeros(3), tol)[0]


# ---------------------------------------------------------------------------
# K0 truncation


def _level_radius(V: PotentialModel, M: float) -> Optional[float]:
    """Radius where a monotone radial |V| crosses M, if it does."""
    if not (V.radial and V.monotone):
        return None
    g = lambda r: abs(float(V.radial_profile(np.array(r)))) - M
    lo, hi = 1e-14, _radial_outer_limit(V)
    if g(lo) <= 0 or g(hi) >= 0:
        return None
    return float(optimize.brentq(g, lo, hi, xtol=1e-14, rtol=1e-12))


def restrict(V: PotentialModel, R: float, M: float, keep: bool) -> PotentialModel:
    """V restricted to {|x| <= R, |V| <= M} (keep=True) or its complement."""
    f = V.radial_profile if V.radial else None
    ev = V.evaluate

    def mask_r(r, v):
        inside = (r <= R) & (np.abs(v) <= M)
        return inside if keep else ~inside

    name = f"{V.name}|{'core' if keep else 'tail'}(R={R:.6g},M={M:.6g})"
    params = {"of": V.fingerprint(), "R": R, "M": M, "keep": keep}
    if V.radial:
        prof = lambda r: np.where(mask_r(np.asarray(r), f(r)), f(r), 0.0)
        cuts = set(V.breakpoints) | {R}
        r_M = _level_radius(V, M) if math.isfinite(M) else None
        if r_M is not None:
            cuts.add(r_M)
        return PotentialModel(
            kind="radial-analytic", name=name, profile=prof,
            support_radius=R if keep else V.support_radius,
            r_eff=min(R, V.r_eff) if keep else V.r_eff,
            breakpoints=tuple(sorted(cuts)), monotone=False,
            bound=min(M, V.bound or M) if keep else V.bound, params=params,
        )
    fld = lambda x: np.where(mask_r(np.linalg.norm(x, axis=-1), ev(x)), ev(x), 0.0)
    return PotentialModel(kind="general", name=name, radial=False, field_fn=fld,
                          support_radius=R if keep else V.support_radius,
                          r_eff=min(R, V.r_eff) if keep else V.r_eff, params=params)


def truncate_to_K0(V: PotentialModel, eps: float, R_max: float = 1e4,
                   M_max: float = 1e12, tol: float = 1e-9):
    """Bounded compactly supported V_eps = V 1_{|x|<=R} 1_{|V|<=M} with Kato tail <= eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if V.is_zero:
        return V, 0.0
    has_support = V.support_radius is not None
    bounded = V.bound is not None and math.isfinite(V.bound)
    if has_support and bounded:
        return V, 0.0
    R = float(V.support_radius) if has_support else max(1.0, 0.05 * V.r_eff)
    M = float(V.bound) if bounded else 1.0
    best = math.inf
    while True:
        tail_V = restrict(V, R, M, keep=False)
        tail = kato_norm(tail_V, tol=tol).value
        best = min(best, tail)
        if tail <= eps:
            return restrict(V, R, M, keep=True), tail
        # grow whichever part dominates the tail
        far = kato_norm(restrict(V, R, math.inf, keep=False), tol=tol).value
        grew = False
        if not has_support and far > eps / 2 and R < R_max:
            R = min(R * 1.5, R_max)
            grew = True
        if (not bounded) and (tail - far > eps / 2 or not grew) and M < M_max:
            M = min(M * 4.0, M_max)
            grew = True
        if not grew:
            raise TruncationError(
                f"no (R, M) with Kato tail <= {eps} within R <= {R_max}, M <= {M_max}",
                best_tail=best)


# ---------------------------------------------------------------------------
# chain sampling


class KatoChainSampler:
    """Sequential sampler of x_k ~ |V(x_k)| / (4 pi |x_{k-1} - x_k|) / weight.

    ``step`` returns the next points together with the normalizer
    ``int |V(y)| / (4 pi |x - y|) dy`` at the previous point, so the product of
    normalizers along a chain is an unbiased estimate of the chain integral.
    Radial potentials are sampled exactly through the shell theorem; general
    ones by a uniform direction followed by a radial draw along the ray.
    """

    def __init__(self, V: PotentialModel, n_cells: int = 4000, n_dirs_table: int = 0):
        if V.is_zero:
            raise ValueError("cannot sample chains of the zero potential")
        self.V = V
        self.radial = V.radial
        R = _radial_outer_limit(V)
        self.R = R
        if self.radial:
            self._build_radial_tables(R, n_cells)
        else:
            self._rho_nodes = np.linspace(0.0, 2.0 * R, n_cells + 1)

    def _build_radial_tables(self, R, n_cells):
        V = self.V
        core = np.geomspace(1e-9 * R, 1e-2 * R, 64)
        edges = np.unique(np.concatenate([[0.0], core, np.linspace(1e-2 * R, R, n_cells),
                                          [b for b in V.breakpoints if 0 < b < R], [R]]))
        xg, wg = np.polynomial.legendre.leggauss(8)
        lo, hi = edges[:-1, None], edges[1:, None]
        r = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * wg
        av = np.abs(V.radial_profile(r))
        self._edges = edges
        self._A1 = np.concatenate([[0.0], np.cumsum(np.sum(w * r * av, axis=1))])
        self._A2 = np.concatenate([[0.0], np.cumsum(np.sum(w * r * r * av, axis=1))])

    @staticmethod
    def _interp(xq, xp, fp):
        return np.interp(xq, xp, fp)

    def _invert(self, table, u):
        # inverse CDF with linear interpolation inside cells; flat cells skipped
        idx = np.clip(np.searchsorted(table, u, side="right") - 1, 0, len(table) - 2)
        lo, hi = table[idx], table[idx + 1]
        frac = np.where(hi > lo, (u - lo) / np.where(hi > lo, hi - lo, 1.0), 0.5)
        return self._edges[idx] + frac * (self._edges[idx + 1] - self._edges[idx])

    def normalizer(self, x) -> np.ndarray:
        """int |V(y)| / (4 pi |x - y|) dy at each point of ``x`` (radial tables).

        The shell theorem gives A2(a)/a + (A1(inf) - A1(a)) with
        A1 = int_0 t |V|, A2 = int_0 t^2 |V|; the 4 pi cancels.
        """
        a = np.linalg.norm(np.atleast_2d(x), axis=-1)
        A1 = self._interp(a, self._edges, self._A1)
        A2 = self._interp(a, self._edges, self._A2)
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = np.where(a > 0, A2 / np.where(a > 0, a, 1.0), 0.0)
        return inner + (self._A1[-1] - A1)

    def step(self, x: np.ndarray, rng: np.random.Generator):
        if self.radial:
            return self._step_radial(x, rng)
        return self._step_ray(x, rng)

    def _step_radial(self, x, rng):
        n = x.shape[0]
        a = np.linalg.norm(x, axis=-1)
        A1a = self._interp(a, self._edges, self._A1)
        A2a = self._interp(a, self._edges, self._A2)
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = np.where(a > 0, A2a / np.where(a > 0, a, 1.0), 0.0)
        outer = self._A1[-1] - A1a
        total = inner + outer
        u = rng.random(n) * total
        pick_inner = u < inner
        r = np.empty(n)
        ui = np.where(pick_inner, u * a, 0.0)          # A2 target on [0, a]
        r[pick_inner] = self._invert(self._A2, ui[pick_inner])
        uo = A1a + (u - inner)                          # A1 target on [a, R]
        r[~pick_inner] = self._invert(self._A1, uo[~pick_inner])
        # angle from x: density in s = |x - y| uniform on [|a - r|, a + r]
        s = np.abs(a - r) + rng.random(n) * (a + r - np.abs(a - r))
        with np.errstate(divide="ignore", invalid="ignore"):
            mu = np.where(a * r > 0, (a * a + r * r - s * s) / (2 * a * r), 2 * rng.random(n) - 1)
        mu = np.clip(mu, -1.0, 1.0)
        phi = 2 * np.pi * rng.random(n)
        e3 = np.where(a[:, None] > 0, x / np.where(a > 0, a, 1.0)[:, None],
                      np.array([0.0, 0.0, 1.0]))
        e1, e2 = _orthonormal_frame(e3)
        st = np.sqrt(1 - mu * mu)
        y = r[:, None] * (mu[:, None] * e3 + (st * np.cos(phi))[:, None] * e1
                          + (st * np.sin(phi))[:, None] * e2)
        return y, total

    def _step_ray(self, x, rng):
        n = x.shape[0]
        w = rng.normal(size=(n, 3))
        w /= np.linalg.norm(w, axis=-1, keepdims=True)
        rho = self._rho_nodes
        # per-chain ray profile rho |V(x + rho w)|; cells integrated by midpoint rule
        rho_max = np.linalg.norm(x, axis=-1) + self.R
        scale = rho_max / rho[-1]
        mids = 0.5 * (rho[1:] + rho[:-1])
        pts = x[:, None, :] + (mids[None, :, None] * scale[:, None, None]) * w[:, None, :]
        dens = mids[None, :] * scale[:, None] * np.abs(self.V.evaluate(pts))
        cell = dens * (np.diff(rho)[None, :] * scale[:, None])
        cdf = np.cumsum(cell, axis=1)
        total = cdf[:, -1]
        u = rng.random(n) * total
        k = np.array([np.searchsorted(cdf[i], u[i]) for i in range(n)])
        k = np.minimum(k, len(mids) - 1)
        prev = np.where(k > 0, cdf[np.arange(n), np.maximum(k - 1, 0)], 0.0)
        frac = np.where(cell[np.arange(n), k] > 0,
                        (u - prev) / np.maximum(cell[np.arange(n), k], 1e-300), 0.5)
        rr = (rho[k] + frac * np.diff(rho)[k]) * scale
        # L(w) = int rho |V| drho; average over directions of L equals the Kato integral / 4 pi
        return x + rr[:, None] * w, total

    def sample_chains(self, x0, n: int, size: int, rng: np.random.Generator):
        """Chains x_1..x_n started at x0.

        Returns (points (size, n, 3), weight (size,), sign (size,)) where
        ``weight * sign`` multiplied by any test function of the chain is an
        unbiased estimate of int prod V(x_k) / prod 4 pi |x_{k-1} - x_k| f dx.
        """
        x = np.broadcast_to(np.asarray(x0, dtype=float), (size, 3)).copy()
        pts = np.empty((size, n, 3))
        weight = np.ones(size)
        sign = np.ones(size)
        for k in range(n):
            x, norm = self.step(x, rng)
            pts[:, k] = x
            weight *= norm
            sign *= np.sign(self.V.evaluate(x))
        return pts, weight, sign


def _orthonormal_frame(e3):
    helper = np.where(np.abs(e3[:, 2:3]) < 0.9, np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))
    e1 = np.cross(helper, e3)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(e3, e1)
    return e1, e2


@dataclass(frozen=True)
class ChainBound:
    n: int
    value: float
    stderr: float
    bound: float
    center: tuple


def chain_integral_bound(V: PotentialModel, n: int, samples: int = 20000,
                         rng: Optional[np.random.Generator] = None, centers=None,
                         tolerance: float = 0.05, kato: Optional[float] = None) -> ChainBound:
    """Estimate sup_{x0} int prod |V(x_k)| / prod 4 pi |x_{k-1} - x_k| dx_1..dx_n.

    n = 0 and n = 1 are deterministic; n >= 2 uses exact chain sampling, so
    the estimator is the mean of products of per-step Kato integrals.  Raises
    InvariantViolation when the estimate exceeds (||V||_K / 4 pi)^n (1 + tol)
    by more than three standard errors.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return ChainBound(0, 1.0, 0.0, 1.0, (0.0, 0.0, 0.0))
    if kato is None:
        kato = kato_norm(V).value
    q = kato / FOUR_PI
    bound = q ** n
    if V.is_zero:
        return ChainBound(n, 0.0, 0.0, 0.0, (0.0, 0.0, 0.0))
    if centers is None:
        est = kato_norm(V)
        centers = [est.argmax]
        if V.radial and not V.monotone:
            centers.append((0.0, 0.0, 0.0))
    centers = [tuple(map(float, c)) for c in centers]
    if n == 1:
        vals = [(_kato_at(V, np.array(c), 1e-10)[0] / FOUR_PI, c) for c in centers]
        val, c = max(vals)
        result = ChainBound(1, val, 0.0, bound, c)
    else:
        rng = rng or np.random.default_rng(0)
        sampler = KatoChainSampler(V)
        best = None
        for c in centers:
            _, w, _ = sampler.sample_chains(np.array(c), n, samples, rng)
            cand = (float(w.mean()), float(w.std(ddof=1) / math.sqrt(samples)), c)
            if best is None or cand[0] > best[0]:
                best = cand
        result = ChainBound(n, best[0], best[1], bound, best[2])
    if result.value > bound * (1 + tolerance) + 3 * result.stderr:
        raise InvariantViolation(
            f"chain integral n={n}: {result.value:.6g} exceeds (||V||_K/4pi)^n = {bound:.6g}",
            report=result)
    return result
