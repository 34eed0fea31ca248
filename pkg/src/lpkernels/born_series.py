"""Kernels of the Littlewood-Paley projections of H = -Delta + V as series.

Three expansions are implemented:

* the Born series, whose n-th term is a chain integral over x_1..x_n
  weighted by F_N(sigma_n), sigma_n the total chain length;
* the low-frequency resummation about lam = 0, using S_0 = (I + V R_0(0))^{-1}
  and the differences B_{lam,0};
* the medium-frequency resummation, the same expansion about the centers
  lam_j = j delta of a translated partition.

Every term is real: the transform of the odd profile is i F_N, and the i
cancels against the prefactor of the chain representation.  The resummed
terms carry an explicit imaginary residue for checking.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import prolate
from .errors import BudgetExceeded, DiagonalSingularityError, RegimeError
from .multiplier import (F1, F1_direct, MultiplierProfile, make_bump,
                         make_translated_partition, moment, sobolev_W_m1_norm)
from .potential import FOUR_PI, KatoChainSampler, PotentialModel, kato_norm
from .resolvent_ops import (DiscretizedOperator, Inversion, QuadratureGrid, build_B_majorant,
                            invert_S, resolvent_matrix, uniform_S_tilde_bound)

REGIMES = ("small-potential", "high-frequency", "low-frequency", "medium-frequency")
T_CUT = 400.0       # beyond N sigma = T_CUT the transform is below 1e-10


# ---------------------------------------------------------------------------
# configuration and results


@dataclass
class ResolventSetup:
    """Everything the resummed series needs, computed once per potential and grid."""

    V: PotentialModel
    grid: QuadratureGrid
    kato: float
    S_tilde: float
    eps: float
    delta: float
    N0: float
    B_major: DiscretizedOperator
    lam_details: list = field(default_factory=list)
    _inversions: dict = field(default_factory=dict, repr=False)

    def inversion(self, lam: float) -> Inversion:
        lam = float(lam)
        if lam not in self._inversions:
            self._inversions[lam] = invert_S(self.V, lam, self.grid)
        return self._inversions[lam]

    def ledger(self) -> dict:
        return {"kato_norm": self.kato, "S_tilde": self.S_tilde, "eps": self.eps,
                "delta": self.delta, "N0": self.N0, "B_major_l1": self.B_major.l1_norm,
                "grid_size": self.grid.size, "lambda_samples": self.lam_details}


@dataclass
class SeriesConfig:
    regime: str = "auto"
    max_n: int = 8
    term_tolerance: float = 1e-3
    mc_samples: int = 20000
    mc_budget: int = 320000
    seed: int = 0
    N0: Optional[float] = None
    N1: Optional[float] = None
    grid: Optional[QuadratureGrid] = None
    setup: Optional[ResolventSetup] = None
    profile: MultiplierProfile = field(default_factory=make_bump)
    m: int = 3
    lam_nodes: int = 24
    max_inversions: int = 16
    strict_budget: bool = False

    def __post_init__(self):
        if self.max_n < 0:
            raise ValueError("max_n must be nonnegative")
        if self.regime not in REGIMES + ("auto",):
            raise ValueError(f"unknown regime {self.regime!r}")


@dataclass
class KernelEvaluation:
    value: float
    terms: list
    stderrs: list
    mc_stderr: float
    truncation_bound: float
    regime: str
    imag_residue: float = 0.0
    meta: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {"regime": self.regime, "value": self.value, "stderr": self.mc_stderr,
                "truncation_bound": self.truncation_bound}


def _single(value, stderr, regime, imag=0.0, **meta):
    return KernelEvaluation(float(value), [float(value)], [float(stderr)], float(stderr), 0.0,
                            regime, float(imag), dict(meta))


def _rng(seed: int, *parts) -> np.random.Generator:
    """Generator keyed by the seed and the evaluation point (order independent)."""
    words = []
    for p in parts:
        for v in np.atleast_1d(np.asarray(p, dtype=float)):
            b = int(np.float64(v).view(np.uint64))
            words += [b & 0xFFFFFFFF, b >> 32]
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(words)))


def _rho(x, y) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))


# ---------------------------------------------------------------------------
# free kernel and envelopes


def free_LP_kernel(N: float, x, y, profile: Optional[MultiplierProfile] = None) -> float:
    """P_N(x, y) = N^2 F_1(N rho) / (4 pi^2 rho); N^3 int u^2 p / (2 pi^2) on the diagonal.

    For a Sobolev profile the multiplier carries the extra factor N^{-s}.
    """
    profile = profile or make_bump()
    rho = _rho(x, y)
    t = N * rho
    scale = N ** (-(profile.sobolev_s or 0.0))
    if t < 1e-2:
        # sin(ut)/(ut) expanded to t^4: relative error below 1e-13
        m2, m4, m6 = moment(profile, 2), moment(profile, 4), moment(profile, 6)
        val = m2 - t * t * m4 / 6 + t ** 4 * m6 / 120
        return scale * N ** 3 * val / (2 * math.pi ** 2)
    F = float(F1_direct(profile.at_scale(1.0), np.array([t]))[0])
    return scale * N * N * F / (4 * math.pi ** 2 * rho)


@functools.lru_cache(maxsize=8)
def _decay_table(key):
    s, amp = key
    prof = MultiplierProfile(1.0, s, amp)
    t = np.linspace(0.0, T_CUT, 40001)
    F = np.abs(F1(prof, t))
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(t > 0, F / t, 2 * moment(prof, 2))
    return t, np.maximum.accumulate(g[::-1])[::-1]


def chain_decay(profile: MultiplierProfile, t) -> np.ndarray:
    """g(t) = sup_{tau >= t} |F_1(tau)| / tau, evaluated conservatively on a grid."""
    grid, g = _decay_table(profile.key())
    t = np.abs(np.asarray(t, dtype=float))
    k = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, len(grid) - 1)
    return np.where(t <= T_CUT, g[k], g[-1])


def born_envelope(n: int, q: float, N: float, rho: float,
                  profile: Optional[MultiplierProfile] = None) -> float:
    """Rigorous bound (n+1) q^n N^3 g(N rho) / (4 pi^2) on the n-th Born term.

    Splitting sigma_n = sum |x_j - x_{j+1}| and using |F_N(sigma)| <= sigma N^2
    g(N rho) for sigma >= rho reduces each of the n+1 pieces to a chain
    integral bounded by q^n, q = ||V||_K / 4 pi.
    """
    profile = profile or make_bump()
    return (n + 1) * q ** n * N ** 3 * float(chain_decay(profile, N * rho)) / (4 * math.pi ** 2)


def envelope_tail(M: int, q: float) -> float:
    """sum_{n > M} (n + 1) q^n for q < 1."""
    if q >= 1:
        return math.inf
    total = 1.0 / (1 - q) ** 2
    head = sum((n + 1) * q ** n for n in range(M + 1))
    return max(total - head, 0.0)


def theorem_envelope(N: float, rho: float, m: int, profile: Optional[MultiplierProfile] = None
                     ) -> float:
    """N^3 ||chi||_{W^{m,1}} / <N rho>^{m+1}."""
    profile = profile or make_bump()
    return N ** 3 * sobolev_W_m1_norm(profile, m) / (1 + (N * rho) ** 2) ** ((m + 1) / 2)


# ---------------------------------------------------------------------------
# Born terms


def _first_term(N, x, y, V, profile, tol=1e-6):
    prof = profile.at_scale(N)
    weight = lambda s: N * F1(prof, N * s)
    sigma_max = _rho(x, y) + T_CUT / N
    rho = _rho(x, y)
    R = V.support_radius if V.support_radius is not None else V.r_eff
    span = min(prolate.sigma_limit(V, x, y), sigma_max) - prolate.sigma_lower(V, x, y)
    panels = int(min(256, max(16, math.ceil(N * max(span, 0.0) / 2))))
    if rho < 1e-9 * max(1.0, R):
        val, err = prolate.coincident_integral(V, x, weight, tol=tol, n_panels=panels,
                                               sigma_max=sigma_max)
        # weight(2r)/r^2 limit of weight(r1 + r2)/(r1 r2)
    else:
        val, err = prolate.two_focus_integral(V, x, y, weight, tol=tol, n_panels=panels,
                                              sigma_max=sigma_max)
    c = -(N / math.pi) / (16 * math.pi ** 2)
    return c * val, abs(c) * err


def _mc_term(n, N, x, y, V, profile, samples, rng, sampler=None):
    sampler = sampler or KatoChainSampler(V)
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    pts, weight, sign = sampler.sample_chains(x, n, samples, rng)
    steps = np.linalg.norm(np.diff(pts, axis=1), axis=-1).sum(axis=1) if n > 1 else 0.0
    first = np.linalg.norm(pts[:, 0] - x, axis=-1)
    last = np.linalg.norm(pts[:, -1] - y, axis=-1)
    sigma = first + steps + last
    F = N * F1(profile, N * sigma)
    est = (-1) ** n * (N / math.pi) * weight * sign * F / (FOUR_PI * last)
    return est


def born_term(n: int, N: float, x, y, V: PotentialModel,
              config: Optional[SeriesConfig] = None, sampler=None) -> KernelEvaluation:
    """n-th term of the Born series of P_N(x, y).

    n = 0 is the free kernel, n = 1 a deterministic prolate quadrature,
    n >= 2 Monte Carlo over Kato-weighted chains (sample count doubled until
    the standard error is below term_tolerance times the free diagonal value
    or the budget runs out).
    """
    config = config or SeriesConfig()
    profile = config.profile
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return _single(free_LP_kernel(N, x, y, profile), 0.0, "small-potential", n=0)
    if V.is_zero:
        return _single(0.0, 0.0, "small-potential", n=n)
    if n == 1:
        val, err = _first_term(N, x, y, V, profile)
        return _single(val, 0.0, "small-potential", n=1, quadrature_error=err)
    scale = N ** 3 * moment(profile, 2) / (2 * math.pi ** 2)
    target = config.term_tolerance * scale
    rng = _rng(config.seed, n, N, x, y)
    sampler = sampler or KatoChainSampler(V)
    chunks = []
    size = config.mc_samples
    total = 0
    while True:
        chunks.append(_mc_term(n, N, x, y, V, profile, size, rng, sampler))
        total += size
        est = np.concatenate(chunks)
        mean = float(est.mean())
        err = float(est.std(ddof=1) / math.sqrt(est.size))
        if err <= target or total >= config.mc_budget:
            break
        size = min(total, config.mc_budget - total)
    result = _single(mean, err, "small-potential", n=n, samples=total)
    if err > target:
        result.meta["budget_exceeded"] = True
        if config.strict_budget:
            raise BudgetExceeded(
                f"term n={n}: standard error {err:.3g} above target {target:.3g} after "
                f"{total} samples", partial=result)
    return result


def born_terms(N, x, y, V, config: Optional[SeriesConfig] = None, max_n=None):
    config = config or SeriesConfig()
    max_n = config.max_n if max_n is None else max_n
    sampler = KatoChainSampler(V) if not V.is_zero and max_n >= 2 else None
    return [born_term(n, N, x, y, V, config, sampler) for n in range(max_n + 1)]


def sum_small_potential(N: float, x, y, V: PotentialModel,
                        config: Optional[SeriesConfig] = None, kato: Optional[float] = None
                        ) -> KernelEvaluation:
    """Born series summed to max_n for ||V||_K < 4 pi, with a rigorous tail bound."""
    config = config or SeriesConfig()
    kato = kato_norm(V).value if kato is None else kato
    if kato >= FOUR_PI:
        raise RegimeError(
            f"||V||_K = {kato:.4g} >= 4 pi; the Born series need not converge. Use the "
            f"thresholds and the low/medium/high-frequency paths instead")
    q = kato / FOUR_PI
    terms = born_terms(N, x, y, V, config)
    rho = _rho(x, y)
    tail = envelope_tail(config.max_n, q) * born_envelope(0, 1.0, N, rho, config.profile)
    values = [t.value for t in terms]
    errs = [t.mc_stderr for t in terms]
    return KernelEvaluation(float(sum(values)), values, errs,
                            float(math.sqrt(sum(e * e for e in errs))), tail,
                            "small-potential",
                            meta={"q": q, "budget_exceeded": any(
                                t.meta.get("budget_exceeded") for t in terms)})


def sum_high_frequency(N: float, x, y, V: PotentialModel, config: SeriesConfig,
                       eps: float) -> KernelEvaluation:
    """Born series for N >= N_1; the tail uses (n+1) eps^n with a constant fitted on the terms."""
    terms = born_terms(N, x, y, V, config)
    values = [t.value for t in terms]
    errs = [t.mc_stderr for t in terms]
    const = max(abs(v) / ((n + 1) * eps ** n * N ** 3) for n, v in enumerate(values))
    tail = const * N ** 3 * envelope_tail(config.max_n, eps)
    return KernelEvaluation(float(sum(values)), values, errs,
                            float(math.sqrt(sum(e * e for e in errs))), tail, "high-frequency",
                            meta={"eps": eps, "fitted_constant": const})


# ---------------------------------------------------------------------------
# resummed series about a center lam_0


def build_resolvent_setup(V: PotentialModel, grid: QuadratureGrid, lam_samples=None,
                          eps: Optional[float] = None, kato: Optional[float] = None
                          ) -> ResolventSetup:
    """S_tilde bound, eps = ((S_tilde + 1)^2 ||V||_K)^{-1} (unless given), delta, N_0."""
    kato = kato_norm(V).value if kato is None else kato
    if lam_samples is None:
        lam_max = math.pi / (2 * grid.max_spacing)
        lam_samples = [0.0] + list(np.geomspace(1 / 16, lam_max, 6))
    details = []
    S_t = uniform_S_tilde_bound(V, lam_samples, grid, details)
    if eps is None:
        if kato == 0:
            raise ValueError("eps is undefined for the zero potential")
        eps = 1.0 / ((S_t + 1) ** 2 * kato)
    B, delta = build_B_majorant(V, eps, grid)
    setup = ResolventSetup(V, grid, kato, S_t, eps, delta, delta / 2, B, details)
    return setup


def _lambda_rule(lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def _column_at(V_nodes, grid, lam, y):
    """V(x_i) G_lam(x_i, y) as a grid function (point values)."""
    r = np.linalg.norm(grid.nodes - np.asarray(y, dtype=float)[None, :], axis=1)
    if np.min(r) < 1e-12:
        raise DiagonalSingularityError("y coincides with a grid node; move it off the grid")
    return V_nodes * np.exp(1j * lam * r) / (FOUR_PI * r)


def _resummed_vectors(setup: ResolventSetup, lam0: float, lams, y, n_max: int):
    """Grid functions v_n(lam)(x_1) = {S (B_{lam,lam0} S)^n}(x_1, y) minus the delta at y.

    Returns an array (n_max + 1, len(lams), grid.size); row n = 0 holds
    S_tilde_{lam0}(x_1, y).
    """
    grid = setup.grid
    inv = setup.inversion(lam0)
    S = inv.S.matrix
    v = setup.V.evaluate(grid.nodes)
    # S_tilde(., y) = -S V G_lam0(., y)
    s_col = -(S @ _column_at(v, grid, lam0, y))
    R0 = resolvent_matrix(lam0, grid)
    out = np.empty((n_max + 1, len(lams), grid.size), dtype=complex)
    out[0] = s_col[None, :]
    if n_max == 0:
        return out
    for a, lam in enumerate(lams):
        B = v[:, None] * (resolvent_matrix(lam, grid) - R0)
        # B applied to S(., y) = delta_y + s_col
        g = v * (_column_at(np.ones_like(v), grid, lam, y)
                 - _column_at(np.ones_like(v), grid, lam0, y)) + B @ s_col
        for n in range(1, n_max + 1):
            out[n, a] = S @ g
            if n < n_max:
                g = B @ out[n, a]
    return out


def _intermediate_sum(N, x, y, setup, lam0, weight_fn, n_max, lam_nodes, mirror=False):
    """sum over x_1 of (-1)^n N / (4 pi^2 |x - x_1|) P^n(x, x_1, y) for n <= n_max.

    Only lam > 0 is integrated: phi is odd and every kernel at -lam is the
    conjugate of the one at lam, so the negative half doubles the imaginary
    part.  With ``mirror`` the negative half is assembled independently
    (center -lam0) and the real part of the full complex sum is returned as the
    imaginary residue, relative to the term size.
    """
    grid = setup.grid
    lams, wl = _lambda_rule(N / 2, 2 * N, lam_nodes)
    phi = weight_fn(lams) * wl
    vecs = _resummed_vectors(setup, lam0, lams, y, n_max)
    d = np.linalg.norm(grid.nodes - np.asarray(x, dtype=float)[None, :], axis=1)
    inner = np.einsum("l,lk,nlk->nk", phi, np.exp(1j * np.outer(lams, d)), vecs)
    interm = 2 * inner.imag
    outer = grid.weights * N / (4 * math.pi ** 2 * d)
    signs = (-1.0) ** np.arange(n_max + 1)
    terms = signs * (interm @ outer)
    residue = 0.0
    if mirror:
        back = _resummed_vectors(setup, -lam0, -lams, y, n_max)
        inner_neg = np.einsum("l,lk,nlk->nk", -phi, np.exp(-1j * np.outer(lams, d)), back)
        full = (inner + inner_neg) @ outer
        scale = max(float(np.max(np.abs(full.imag))), 1e-300)
        residue = float(np.max(np.abs(full.real))) / scale
    return terms, interm, residue


def lowfreq_terms(N: float, x, y, V: PotentialModel, config: SeriesConfig, n_max=None,
                  mirror=False, enforce_threshold=True):
    """Per-n values of the low-frequency resummed series of P_N - P_N^free.

    ``enforce_threshold=False`` allows N > N_0, where convergence is no longer
    guaranteed but can be checked against the oracle.
    """
    setup = config.setup
    if setup is None:
        raise RegimeError("low-frequency terms need a ResolventSetup in the config")
    if enforce_threshold and N > setup.N0 * (1 + 1e-12):
        raise RegimeError(f"N = {N:g} exceeds N_0 = {setup.N0:g}")
    n_max = config.max_n if n_max is None else n_max
    prof = config.profile.at_scale(N)
    terms, interm, res = _intermediate_sum(N, x, y, setup, 0.0, prof.phi_N, n_max,
                                           config.lam_nodes, mirror)
    return terms, interm, res


def lowfreq_term(n: int, N: float, x, y, V: PotentialModel, config: SeriesConfig
                 ) -> KernelEvaluation:
    if V.is_zero:
        return _single(0.0, 0.0, "low-frequency", n=n)
    terms, _, res = lowfreq_terms(N, x, y, V, config, n_max=n)
    return _single(terms[n], 0.0, "low-frequency", res, n=n)


def medfreq_terms(N: float, x, y, V: PotentialModel, config: SeriesConfig, n_max=None):
    setup = config.setup
    if setup is None:
        raise RegimeError("medium-frequency terms need a ResolventSetup in the config")
    n_max = config.max_n if n_max is None else n_max
    part = make_translated_partition(setup.delta)
    js = part.active_window(N)
    if len(js) > config.max_inversions:
        raise BudgetExceeded(
            f"{len(js)} inversions S_(lam_j) needed for N = {N:g} (delta = {setup.delta:g}); "
            f"budget is {config.max_inversions}", partial=None)
    prof = config.profile.at_scale(N)
    total = np.zeros(n_max + 1)
    residue = 0.0
    for j in js:
        fn = lambda lam, j=j: prof.phi_N(lam) * part.piece(lam, j)
        terms, _, res = _intermediate_sum(N, x, y, setup, part.center(j), fn, n_max,
                                          config.lam_nodes)
        total += terms
        residue = max(residue, res)
    return total, js, residue


def medfreq_term(n: int, N: float, x, y, V: PotentialModel, config: SeriesConfig
                 ) -> KernelEvaluation:
    if V.is_zero:
        return _single(0.0, 0.0, "medium-frequency", n=n)
    total, js, res = medfreq_terms(N, x, y, V, config, n_max=n)
    return _single(total[n], 0.0, "medium-frequency", res, n=n, centers=list(js))


def _resummed(N, x, y, V, config, regime):
    if V.is_zero:
        terms = [0.0] * (config.max_n + 1)
        meta = {}
    elif regime == "low-frequency":
        terms, _, _ = lowfreq_terms(N, x, y, V, config)
        meta = {"N0": config.setup.N0}
    else:
        terms, js, _ = medfreq_terms(N, x, y, V, config)
        meta = {"centers": list(js)}
    terms = [float(t) for t in terms]
    free = free_LP_kernel(N, x, y, config.profile)
    # geometric tail from the last two terms when they decrease
    tail = 0.0
    if len(terms) >= 2 and terms[-2] != 0:
        r = abs(terms[-1] / terms[-2])
        tail = abs(terms[-1]) * r / (1 - r) if r < 1 else math.inf
    return KernelEvaluation(free + sum(terms), [free] + terms, [0.0] * (len(terms) + 1), 0.0,
                            tail, regime, meta=meta)


def projection_kernel(N: float, x, y, V: PotentialModel, config: Optional[SeriesConfig] = None,
                      kato: Optional[float] = None) -> KernelEvaluation:
    """P_N(x, y) through the expansion valid for (V, N); the regime is recorded."""
    config = config or SeriesConfig()
    kato = kato_norm(V).value if kato is None else kato
    regime = config.regime
    if regime == "auto":
        if kato < FOUR_PI:
            regime = "small-potential"
        else:
            N0 = config.N0 if config.N0 is not None else (
                config.setup.N0 if config.setup else None)
            N1 = config.N1
            if N0 is None or N1 is None:
                raise RegimeError(
                    f"||V||_K = {kato:.4g} >= 4 pi and thresholds are unresolved: "
                    f"medium-frequency setup required (run thresholds first)")
            if N >= N1:
                regime = "high-frequency"
            elif N <= N0:
                regime = "low-frequency"
            else:
                regime = "medium-frequency"
    if regime == "small-potential":
        return sum_small_potential(N, x, y, V, config, kato)
    if regime == "high-frequency":
        eps = config.setup.eps if config.setup is not None else 1.0 / kato
        return sum_high_frequency(N, x, y, V, config, eps)
    return _resummed(N, x, y, V, config, regime)
