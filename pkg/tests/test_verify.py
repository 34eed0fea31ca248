import numpy as np
import pytest

from lpkernels import verify
from lpkernels.born_series import SeriesConfig
from lpkernels.potential import ball_potential, zero_potential
from lpkernels.resolvent_ops import grid_for_potential


def _synthetic_rows(power, N=1.0, noise=0.0):
    rows = []
    for t in verify.DECAY_T:
        rows.append({"N": N, "t": float(t), "rho": t / N, "stderr": noise, "regime": "x",
                     "value": N ** 3 / (1 + t * t) ** (power / 2)})
    return rows


def test_fit_far_slope_recovers_power():
    slope, used = verify.fit_far_slope(_synthetic_rows(4.0))
    assert used >= 8
    assert slope == pytest.approx(-4.0, abs=0.05)


def test_decay_report_passes_on_fast_decay():
    rep = verify.decay_report(_synthetic_rows(6.0), m=3)
    assert rep.verdict == verify.PASS
    assert rep.fitted_slope <= rep.target_slope + rep.tolerance


def test_decay_report_fails_on_slow_decay():
    rep = verify.decay_report(_synthetic_rows(2.0), m=3)
    assert rep.verdict == verify.FAIL


def test_decay_report_inconclusive_inside_noise():
    rep = verify.decay_report(_synthetic_rows(4.0, noise=1.0), m=3)
    assert rep.verdict == verify.INCONCLUSIVE
    assert "mc_samples" in rep.notes[0]


def test_high_frequency_target():
    rep = verify.decay_report(_synthetic_rows(3.0), m=2, regime="high-frequency")
    assert rep.target_slope == -2.5 and rep.tolerance == 0.4


def test_free_decay_sweep_slope():
    rep = verify.decay_sweep(zero_potential(), "auto", 3, [1.0], verify.DECAY_T)
    assert rep.verdict == verify.PASS
    assert rep.fitted_slope <= -4 + 0.3


def test_lattice_is_independent_of_jobs(yukawa_half):
    cfg = SeriesConfig(max_n=2, mc_samples=500, mc_budget=500)
    a = verify.kernel_lattice(yukawa_half, [1.0], [0, 3, 10], cfg, jobs=1)
    b = verify.kernel_lattice(yukawa_half, [1.0], [0, 3, 10], cfg, jobs=3)
    assert a == b


def test_summability_zero_potential():
    rep = verify.summability_sweep(zero_potential(), 0.5, np.zeros(3), np.array([0.5, 0, 0]),
                                   n_max=3)
    assert rep["verdict"] == verify.PASS
    assert all(r["value"] == 0.0 for r in rep["terms"][1:])


def test_summability_caps_order():
    with pytest.raises(ValueError):
        verify.summability_sweep(zero_potential(), 1.0, np.zeros(3), np.ones(3), n_max=7)


def test_vr0_norm_check_ball():
    V = ball_potential(1.0, 1.0)
    grid = grid_for_potential(V, n_panels=6, n_radial=3, n_theta=5)
    rep = verify.vr0_norm_check(V, grid, [0.0, 1.0, 5.0])
    assert rep["verdict"] == verify.PASS


def test_threshold_ledger_zero_potential():
    led = verify.threshold_ledger(zero_potential())
    assert led["eps"] is None and led["N1"] == 1.0


def test_lp_scaling_l2_is_flat(yukawa_half):
    rep = verify.lp_lq_scaling(yukawa_half, 2, 2, [0.5, 1, 2])
    assert rep.verdict == verify.PASS
    assert abs(rep.fitted_exponent) <= 0.2


def test_criterion_result_line():
    r = verify.CriterionResult(3, "decay", True, {})
    assert r.line().startswith("[PASS] criterion  3")
