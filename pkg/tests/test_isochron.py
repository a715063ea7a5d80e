import numpy as np
import pytest

from randiso.attractor import stationary_trajectory
from randiso.crps import crps_point
from randiso.flow import flow
from randiso.isochron import (
    asymptotic_phase_lag,
    contraction_profile,
    foliation_report,
    forward_isochron,
    forward_isochrons,
    invariance_residuals,
    isochron_map,
    wrap,
)
from randiso.models import make_model
from randiso.noise import sample_path, shift, zero_path

TWO_PI = 2 * np.pi
R_GRID = np.linspace(0.3, 2.0, 18)


@pytest.fixture(scope="module")
def amp():
    return make_model("amplitude_phase", {"kappa": 2.0, "sigma": 0.3})


@pytest.fixture(scope="module")
def amp_path():
    return sample_path(5, 1e-3, 60.0)


@pytest.fixture(scope="module")
def amp_curve(amp, amp_path):
    return forward_isochron(amp, amp_path, 0.4, R_GRID)


def test_wrap_range():
    a = np.array([-7.0, -np.pi, 0.0, np.pi, 10.0])
    w = wrap(a)
    assert np.all((w >= -np.pi) & (w < np.pi))
    assert np.allclose(np.cos(w), np.cos(a)) and np.allclose(np.sin(w), np.sin(a))


def test_lag_vanishes_on_anchor_trajectory(amp, amp_path):
    traj = stationary_trajectory(amp, amp_path, 0.0, 0.0)
    y = np.array([0.0, traj.R[0]])
    assert abs(asymptotic_phase_lag(amp, amp_path, y)) <= 1e-6


def test_hopf_lag_is_equivariant_in_phase():
    e = make_model("hopf_linear", {"sigma": 0.4})
    p = sample_path(1, 1e-3, 40.0)
    base = asymptotic_phase_lag(e, p, np.array([0.3, 1.4]))
    for d in (0.1, -0.5, 1.2):
        moved = asymptotic_phase_lag(e, p, np.array([0.3 + d, 1.4]))
        assert wrap(moved - base - d) == pytest.approx(0.0, abs=1e-8)


def test_deterministic_lag_is_log_isochron():
    e = make_model("amplitude_phase", {"kappa": 2.0, "sigma": 0.0})
    z = zero_path(1e-3, 40.0)
    for th, r in [(0.3, 0.5), (-1.0, 1.7), (2.0, 1.0)]:
        lag = asymptotic_phase_lag(e, z, np.array([th, r]), anchor=0.2)
        assert wrap(lag - (th + np.log(r) - 0.2)) == pytest.approx(0.0, abs=1e-4)


def test_deterministic_hopf_isochrons_are_rays():
    e = make_model("hopf_linear", {"sigma": 0.0})
    c = forward_isochron(e, zero_path(1e-3, 40.0), 1.1, R_GRID)
    assert np.all(c.converged)
    assert np.allclose(c.theta, 1.1, atol=1e-6)


def test_deterministic_amplitude_phase_isochrons_follow_log():
    e = make_model("amplitude_phase", {"kappa": 2.0, "sigma": 0.0})
    for c in forward_isochrons(e, zero_path(1e-3, 40.0), [0.0, 2.5], R_GRID):
        assert np.ptp(c.theta + np.log(c.r)) <= 1e-4


def test_noisy_hopf_isochrons_stay_rays():
    e = make_model("hopf_linear", {"sigma": 0.3})
    c = forward_isochron(e, sample_path(0, 1e-3, 40.0), 0.7, R_GRID)
    assert np.ptp(c.theta) <= 1e-6


def test_curve_passes_through_anchor_and_converges(amp, amp_path, amp_curve):
    c = amp_curve
    assert np.all(c.converged)
    assert np.max(c.residual) <= 1e-8
    assert np.max(c.final_distance) <= 1e-6
    fine = forward_isochron(amp, amp_path, 0.4, np.array([c.anchor_point[1]]))
    assert abs(wrap(fine.theta[0] - 0.4)) <= 1e-8


def test_samples_share_one_level(amp, amp_path, amp_curve):
    Y = np.stack([amp_curve.theta, amp_curve.r], -1)
    v = isochron_map(amp, amp_path, Y)
    ref = isochron_map(amp, amp_path, amp_curve.anchor_point)
    assert np.max(np.abs(v - ref)) <= 2e-8


def test_contraction_at_unit_rate(amp, amp_path, amp_curve):
    prof = contraction_profile(amp, amp_path, amp_curve)
    scaled = [d * np.exp(t) for t, d in prof.items()]
    assert max(scaled) <= 10 * scaled[0] + 1e-12


def test_invariance_residual_zero_at_zero_shift(amp, amp_path, amp_curve):
    assert invariance_residuals(amp, amp_path, amp_curve, 0.0)["max_residual"] <= 1e-8


def test_hopf_invariance_residual():
    e = make_model("hopf_linear", {"sigma": 0.3})
    p = sample_path(2, 1e-3, 60.0)
    c = forward_isochron(e, p, 0.5, R_GRID)
    assert invariance_residuals(e, p, c, 1.0)["max_residual"] <= 1e-2


def test_deterministic_invariance_residual():
    e = make_model("amplitude_phase", {"kappa": 2.0, "sigma": 0.0})
    z = zero_path(1e-3, 60.0)
    c = forward_isochron(e, z, 0.5, R_GRID)
    assert invariance_residuals(e, z, c, 1.7)["max_residual"] <= 1e-4


def test_map_recovers_time_along_random_periodic_solution(amp, amp_path):
    traj = stationary_trajectory(amp, amp_path, -15.0, 0.0)
    for s in (0.0, 0.5, 1.3):
        ts = np.array([0.0, 0.4, 1.0, 2.0])
        v = isochron_map(amp, amp_path, crps_point(traj, 0.0, ts + s), s)
        assert np.max(np.abs(v - (ts + s))) <= 1e-4


def test_deterministic_hopf_map_is_angle():
    e = make_model("hopf_linear", {"sigma": 0.0})
    z = zero_path(1e-3, 40.0)
    th = np.array([0.2, 1.5, 3.0, 5.0])
    Y = np.stack([th, np.array([0.5, 1.0, 1.3, 1.9])], -1)
    assert np.allclose(isochron_map(e, z, Y), th, atol=1e-6)


def test_map_grows_at_unit_rate_along_flow(amp, amp_path):
    y, s, D = np.array([0.7, 0.6]), 1.0, 0.1
    y1 = flow(amp, amp_path, 0.0, s, y, record_every=0).final_state
    y2 = flow(amp, amp_path, 0.0, s + D, y, record_every=0).final_state
    m1 = isochron_map(amp, shift(amp_path, s), y1, s)
    m2 = isochron_map(amp, shift(amp_path, s + D), y2, s + D)
    assert (m2 - m1) / D == pytest.approx(1.0, abs=1e-2)


def test_noisy_curves_form_a_foliation(amp, amp_path):
    rep = foliation_report(amp, amp_path, test_shape=(16, 6))
    assert rep["ordered"]
    assert rep["min_gap"] > 0
    assert rep["disagreements"] == 0
    assert rep["tested"] > 0


def test_dt_must_match_path(amp, amp_path):
    with pytest.raises(ValueError):
        isochron_map(amp, amp_path, np.array([0.0, 1.0]), dt=1e-2)
