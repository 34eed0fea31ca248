"""Partial-wave functional calculus for radial H = -Delta + V.

Each angular momentum l reduces H to the radial operator
-u'' + (l(l+1)/r^2 + V(r)) u on (0, R_max) with Dirichlet ends, discretized by
the 3-point stencil on a uniform grid.  With orthonormal discrete
eigenvectors u_{l,k} (sum_i u_i^2 = 1) the kernel of m(H) is

    m(H)(x, y) = sum_l (2l+1)/(4 pi) P_l(cos theta)
                 sum_k m(E_{l,k}) u_{l,k}(|x|) u_{l,k}(|y|) / (|x| |y| h).

Eigenpairs can be restricted to an energy window, which is all a band
multiplier needs; negative eigenvalues are always computed so the continuous
projection P_c is available.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import interpolate, linalg, special

from .errors import OracleTruncationError
from .multiplier import chi
from .potential import PotentialModel


@dataclass(frozen=True)
class RadialDiscretization:
    V: PotentialModel
    R_max: float = 40.0
    h: float = 0.02
    l_max: int = 60

    def __post_init__(self):
        if self.h <= 0 or self.R_max <= 2 * self.h:
            raise ValueError("need 0 < h < R_max / 2")
        if self.V.is_zero is False and not self.V.radial:
            raise ValueError("the oracle needs a radial potential")

    @property
    def size(self) -> int:
        return int(round(self.R_max / self.h)) - 1

    @property
    def r(self) -> np.ndarray:
        return self.h * np.arange(1, self.size + 1)

    def key(self) -> str:
        blob = json.dumps({"V": self.V.fingerprint(), "R": self.R_max, "h": self.h,
                           "l": self.l_max}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:20]

    @classmethod
    def for_band(cls, V: PotentialModel, k_max: float, r_eval: float, k_min: float = None,
                 h_max: float = 0.05, resolution: float = 0.1, l_extra: int = 15,
                 buffer: float = 30.0) -> "RadialDiscretization":
        """Grid resolving wavenumbers up to k_max at radii up to r_eval.

        h <= resolution / k_max; R_max >= 2 r_eval + buffer / k_min so the box
        images stay away from the evaluation region; l_max = 2 k_max r_eval + l_extra.
        """
        k_min = k_min or k_max / 4
        h = min(h_max, resolution / k_max)
        R = max(2 * r_eval + buffer / k_min, 4 * r_eval, 10.0)
        R = h * math.ceil(R / h)
        return cls(V, R, h, int(math.ceil(k_max * r_eval * 2)) + l_extra)


def assemble_radial_hamiltonian(l: int, disc: RadialDiscretization):
    """(diagonal, off-diagonal) of the symmetric tridiagonal radial operator."""
    if l < 0:
        raise ValueError("l must be nonnegative")
    r = disc.r
    h2 = disc.h * disc.h
    V = disc.V.radial_profile(r) if not disc.V.is_zero else np.zeros_like(r)
    d = 2.0 / h2 + l * (l + 1) / (r * r) + V
    e = np.full(r.size - 1, -1.0 / h2)
    return d, e


def _solve(l, disc, window):
    d, e = assemble_radial_hamiltonian(l, disc)
    if window is None:
        return linalg.eigh_tridiagonal(d, e)
    lo, hi = window
    try:
        return linalg.eigh_tridiagonal(d, e, select="v", select_range=(lo, hi))
    except ValueError:
        return np.empty(0), np.empty((d.size, 0))


@dataclass
class SpectralData:
    """Eigenpairs per l (optionally only inside ``window``) plus all bound states."""

    disc: RadialDiscretization
    window: Optional[tuple]
    levels: dict = field(default_factory=dict)        # l -> (values, vectors)
    bound: dict = field(default_factory=dict)         # l -> (values, vectors), E < 0

    @property
    def negative_eigenvalues(self):
        return sorted((float(v), l) for l, (vals, _) in self.bound.items() for v in vals)

    def channel(self, l: int):
        if l not in self.levels:
            vals, vecs = _solve(l, self.disc, self.window)
            self.levels[l] = (vals, vecs)
        return self.levels[l]

    def bound_states(self, l: int):
        if l not in self.bound:
            if self.disc.V.is_zero:
                vals, vecs = np.empty(0), np.empty((self.disc.size, 0))
            else:
                # the discrete operator is bounded below by min V
                floor = float(np.min(self.disc.V.radial_profile(self.disc.r))) - 1.0
                vals, vecs = _solve(l, self.disc, (min(floor, -1.0), 0.0))
            # the bisection window is closed; keep strictly negative energies only
            keep = vals < 0
            self.bound[l] = (vals[keep], vecs[:, keep])
        return self.bound[l]


def spectral_data(disc: RadialDiscretization, window: Optional[tuple] = None,
                  l_values=None, cache_dir: Optional[str] = None) -> SpectralData:
    """Solve the channels l in ``l_values`` (default 0..l_max), reading/writing an npz cache."""
    l_values = range(disc.l_max + 1) if l_values is None else l_values
    path = None
    if cache_dir:
        tag = f"{disc.key()}_{'full' if window is None else '%.6g_%.6g' % window}"
        path = os.path.join(cache_dir, f"spectral_{tag}.npz")
        if os.path.exists(path):
            return _load(path, disc, window)
    data = SpectralData(disc, window)
    for l in l_values:
        data.channel(l)
        data.bound_states(l)
    if path:
        os.makedirs(cache_dir, exist_ok=True)
        _save(path, data)
    return data


def _save(path, data):
    arrays = {}
    for l, (vals, vecs) in data.levels.items():
        arrays[f"v{l}"], arrays[f"u{l}"] = vals, vecs
    for l, (vals, vecs) in data.bound.items():
        arrays[f"bv{l}"], arrays[f"bu{l}"] = vals, vecs
    np.savez(path, **arrays)


def _load(path, disc, window):
    data = SpectralData(disc, window)
    with np.load(path) as z:
        for name in z.files:
            if name.startswith("v"):
                l = int(name[1:])
                data.levels[l] = (z[name], z[f"u{l}"])
            elif name.startswith("bv"):
                l = int(name[2:])
                data.bound[l] = (z[name], z[f"bu{l}"])
    return data


def band_window(N: float, margin: float = 1.0) -> tuple:
    """Energy window containing the support [N^2/4, 4N^2] of chi(sqrt(E)/N)."""
    return (N * N / 4 / (1 + 1e-9) / margin, 4 * N * N * (1 + 1e-9) * margin)


def _values_at(vecs, disc, r):
    """u(r)/r for each column of ``vecs`` at radii r (cubic in u with u(0) = 0).

    r = 0 returns the derivative u'(0), the regular limit of u(r)/r for l = 0.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    grid = np.concatenate([[0.0], disc.r, [disc.R_max]])
    U = np.vstack([np.zeros(vecs.shape[1]), vecs, np.zeros(vecs.shape[1])])
    spl = interpolate.CubicSpline(grid, U, axis=0)
    out = np.empty((r.size, vecs.shape[1]))
    zero = r == 0
    if np.any(zero):
        out[zero] = spl(0.0, 1)[None, :]
    if np.any(~zero):
        out[~zero] = spl(r[~zero]) / r[~zero, None]
    return out


def multiplier_kernel(m: Callable, x, y, spectral: SpectralData, tol: float = 1e-6,
                      include_negative: bool = False) -> float:
    """Kernel of m(H) at (x, y); m is applied to eigenvalues (negative ones only if asked).

    Raises OracleTruncationError when the last partial waves still contribute
    more than ``tol`` times the running maximum.
    """
    disc = spectral.disc
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx, ry = float(np.linalg.norm(x)), float(np.linalg.norm(y))
    if max(rx, ry) > disc.R_max / 2:
        raise ValueError("evaluation radii must stay within R_max / 2")
    cos = 1.0 if rx == 0 or ry == 0 else float(np.clip(x @ y / (rx * ry), -1, 1))
    l_top = 0 if min(rx, ry) == 0 else disc.l_max
    total, contrib = 0.0, []
    for l in range(l_top + 1):
        vals, vecs = spectral.channel(l)
        parts = [(vals, vecs)]
        if include_negative:
            parts.append(spectral.bound_states(l))
        c = 0.0
        for vals_, vecs_ in parts:
            if vals_.size == 0:
                continue
            weights = np.asarray(m(vals_), dtype=float)
            ux = _values_at(vecs_, disc, rx)[0]
            uy = _values_at(vecs_, disc, ry)[0]
            c += float(np.sum(weights * ux * uy)) / disc.h
        c *= (2 * l + 1) / (4 * math.pi) * special.eval_legendre(l, cos)
        contrib.append(c)
        total += c
    if l_top > 4:
        scale = max(abs(v) for v in contrib) or 1.0
        tail = sum(abs(v) for v in contrib[-3:])
        if tail > tol * scale:
            raise OracleTruncationError(
                f"partial-wave tail {tail:.3g} exceeds {tol:g} of the kernel scale; "
                f"increase l_max beyond {disc.l_max}")
    return total


def band_multiplier(N: float, s: Optional[float] = None):
    """m(E) = chi(sqrt(E)/N) (times E^{-s/2}) for E > 0, zero otherwise."""
    def m(E):
        E = np.asarray(E, dtype=float)
        k = np.sqrt(np.maximum(E, 0.0))
        out = np.where(E > 0, chi(k / N), 0.0)
        if s is not None:
            out = np.where(E > 0, out * np.maximum(E, 1e-300) ** (-s / 2), 0.0)
        return out
    return m


def window_multiplier(N_lo: float, N_hi: float, s: Optional[float] = None):
    """sum of chi(sqrt(E)/N) over dyadic N in [N_lo, N_hi], times E^{-s/2}, on E > 0."""
    k0, k1 = int(round(math.log2(N_lo))), int(round(math.log2(N_hi)))
    def m(E):
        E = np.asarray(E, dtype=float)
        k = np.sqrt(np.maximum(E, 0.0))
        out = sum(chi(k / 2.0 ** j) for j in range(k0, k1 + 1))
        if s is not None:
            out = out * np.maximum(E, 1e-300) ** (-s / 2)
        return np.where(E > 0, out, 0.0)
    return m


def projection_kernel_oracle(N: float, x, y, V: PotentialModel, disc=None,
                             cache_dir=None) -> float:
    """P_N(x, y) by functional calculus on a grid adapted to the band."""
    r_eval = max(float(np.linalg.norm(x)), float(np.linalg.norm(y)))
    disc = disc or RadialDiscretization.for_band(V, 2 * N, max(r_eval, 1.0), k_min=N / 2)
    spec = spectral_data(disc, band_window(N),
                         l_values=range(1) if min(np.linalg.norm(x), np.linalg.norm(y)) == 0
                         else None, cache_dir=cache_dir)
    return multiplier_kernel(band_multiplier(N), x, y, spec)


def continuous_projection_apply(f, spectral: SpectralData, l: int = 0) -> np.ndarray:
    """P_c on the l-channel: remove the bound-state components of the radial samples f.

    ``f`` holds u(r_i) = r_i g(r_i) (or any grid vector of the channel).
    """
    f = np.asarray(f, dtype=float)
    _, vecs = spectral.bound_states(l)
    if vecs.shape[1] == 0:
        return f.copy()
    return f - vecs @ (vecs.T @ f)


def apply_multiplier(m: Callable, g, spectral: SpectralData, l: int = 0) -> np.ndarray:
    """m(H) acting on the channel function u = r g (grid samples), window eigenpairs only."""
    vals, vecs = spectral.channel(l)
    u = np.asarray(g, dtype=float)
    return vecs @ (np.asarray(m(vals), dtype=float) * (vecs.T @ u))


def sobolev_multiplier_kernel(s: float, window: tuple, x, y, spectral: SpectralData) -> float:
    """Kernel of H^{-s/2} P_window P_c: lambda^{-s/2} on positive energies, zero on bound states."""
    if not 0 < s < 3:
        raise ValueError("s must lie in (0, 3)")
    return multiplier_kernel(window_multiplier(window[0], window[1], s), x, y, spectral)


def radial_norm(g, r, h, p: float) -> float:
    """L^p(R^3) norm of a radial function sampled on the uniform grid r."""
    g = np.abs(np.asarray(g, dtype=float))
    if math.isinf(p):
        return float(g.max())
    return float((4 * math.pi * h * np.sum(g ** p * r * r)) ** (1 / p))
