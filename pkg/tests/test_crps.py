import numpy as np
import pytest

from randiso.attractor import stationary_radius, stationary_trajectory
from randiso.crps import (
    PeriodError,
    crps_eval,
    crps_residuals,
    crps_sample,
    random_period,
    random_periods,
)
from randiso.models import make_model
from randiso.noise import sample_path, shift, zero_path

TWO_PI = 2 * np.pi


def test_hopf_psi_is_rotating_random_circle():
    sigma = 0.3
    e = make_model("hopf_linear", {"sigma": sigma})
    p = sample_path(1, 1e-3, 30.0)
    r = stationary_radius(p, sigma).value
    t = np.array([0.0, 0.5, 2.0, 4.1])
    anchor = 0.7
    got = crps_eval(e, p, anchor, t)
    want = r * np.stack([np.cos(anchor + t), np.sin(anchor + t)], -1)
    assert np.allclose(got, want, atol=1e-9)


def test_psi_at_time_zero_is_on_fiber():
    e = make_model("amplitude_phase", {"sigma": 0.3})
    p = sample_path(2, 1e-3, 30.0)
    r = stationary_radius(p, 0.3).value
    assert np.allclose(crps_eval(e, p, 1.1, 0.0), r * np.array([np.cos(1.1), np.sin(1.1)]))


@pytest.mark.parametrize("seed", range(5))
def test_hopf_period_is_two_pi(seed):
    e = make_model("hopf_linear", {"sigma": 0.5})
    assert random_period(e, sample_path(seed, 1e-3, 30.0)) == pytest.approx(TWO_PI, abs=1e-6)


def test_deterministic_amplitude_phase_period():
    e = make_model("amplitude_phase", {"kappa": 2.0, "sigma": 0.0})
    assert random_period(e, zero_path(1e-3, 30.0)) == pytest.approx(np.pi, abs=1e-6)


def test_periods_positive_and_bounded():
    kappa = 2.0
    e = make_model("amplitude_phase", {"kappa": kappa, "sigma": 0.3})
    paths = [sample_path(s, 1e-2, 30.0) for s in range(200)]
    T, sign = random_periods(e, paths)
    assert np.all(T > 0)
    assert np.all(T <= TWO_PI / e.skew.h_min + 1e-9)
    assert np.all(sign == 1)


def test_period_integral_identity_on_shifted_paths():
    e = make_model("amplitude_phase", {"kappa": 2.0, "sigma": 0.3})
    dt = 1e-3
    p = sample_path(5, dt, 40.0)
    traj = stationary_trajectory(e, p, -10.0, 0.0)
    for t in (1.0, 2.0, 5.0):
        Tt = random_period(e, shift(p, -t))
        a, b = -(t + Tt), -t
        integral = np.interp(b, traj.times, traj.phase) - np.interp(a, traj.times, traj.phase)
        assert integral == pytest.approx(TWO_PI, abs=1e-6)


def test_hopf_residuals_small():
    e = make_model("hopf_linear", {"sigma": 0.3})
    p = sample_path(3, 1e-3, 40.0)
    res = crps_residuals(e, p, 0.0, np.array([0.5, 1.0, 3.0]))
    assert res["periodicity"] <= 1e-2
    assert res["invariance"] <= 1e-2
    assert res["anchor_gap"] <= 1e-6


def test_amplitude_phase_residuals_small():
    e = make_model("amplitude_phase", {"kappa": 2.0, "sigma": 0.3})
    p = sample_path(4, 1e-3, 40.0)
    res = crps_residuals(e, p, 0.3, np.array([0.5, 1.5, 3.0]))
    assert res["periodicity"] <= 1e-2
    assert res["invariance"] <= 1e-2
    assert res["anchor_gap"] <= 1e-6


def test_zero_noise_residuals_vanish():
    e = make_model("amplitude_phase", {"kappa": 2.0, "sigma": 0.0})
    res = crps_residuals(e, zero_path(1e-3, 40.0), 0.0, np.array([0.5, 1.0, 3.0]))
    assert max(res["periodicity"], res["anchor_gap"]) <= 1e-6
    assert res["invariance"] <= 1e-6


def test_sample_closes_on_itself():
    e = make_model("amplitude_phase", {"kappa": 2.0, "sigma": 0.3})
    s = crps_sample(e, sample_path(6, 1e-3, 30.0), anchor=0.2, n_samples=50)
    assert s.psi.shape == (50, 2)
    assert np.allclose(s.psi[0], s.psi[-1], atol=1e-6)
    assert s.hit_sign == 1


def test_noisy_phase_records_hitting_sign():
    e = make_model("noisy_phase", {"kappa": 2.0, "sigma": 0.3, "sigma_theta": 0.2})
    paths = [sample_path(s, 1e-2, 60.0, channels=2) for s in range(20)]
    T, sign = random_periods(e, paths)
    assert np.all(T > 0)
    assert set(np.unique(sign)) <= {-1, 1}


def test_short_window_is_reported():
    e = make_model("amplitude_phase", {"kappa": 2.0, "sigma": 0.3})
    with pytest.raises((PeriodError, ValueError)):
        random_period(e, sample_path(0, 1e-2, 21.0))


def test_shear_model_has_no_construction():
    with pytest.raises(ValueError):
        random_period(make_model("shear_additive"), sample_path(0, 1e-2, 30.0, channels=2))
