import numpy as np
import pytest

from randiso.lyapunov import lyapunov_spectrum
from randiso.models import make_model
from randiso.noise import sample_path, zero_path


@pytest.fixture(scope="module")
def hopf_noisy():
    e = make_model("hopf_linear", {"sigma": 0.3})
    return lyapunov_spectrum(e, sample_path(0, 5e-3, 520.0), [0.0, 1.0], t_max=500.0)


def test_hopf_exponents_with_noise(hopf_noisy):
    lam = hopf_noisy.exponents
    assert abs(lam[0]) <= 0.02
    # the second exponent is E_p[1 - 3 r^2] = -2 since E_p[r^2] = 1
    assert abs(lam[1] + 2.0) <= 0.05


def test_sum_rule(hopf_noisy):
    se = np.sqrt(np.sum(hopf_noisy.standard_errors**2) + hopf_noisy.liouville_se**2)
    assert abs(hopf_noisy.sum_rule_gap) <= 2 * se


def test_deterministic_floquet_exponents():
    e = make_model("hopf_linear", {"sigma": 0.0}, chart="planar")
    L = lyapunov_spectrum(e, zero_path(1e-2, 120.0), [1.0, 0.0], t_max=100.0)
    assert L.exponents == pytest.approx([0.0, -2.0], abs=1e-3)
    assert abs(L.sum_rule_gap) <= 1e-3


def test_off_grid_burn_in_matches():
    e = make_model("hopf_linear", {"sigma": 0.0}, chart="planar")
    L = lyapunov_spectrum(e, zero_path(1e-2, 120.0), [1.0, 0.0], t_max=50.0, burn_in=10.3)
    assert L.exponents == pytest.approx([0.0, -2.0], abs=1e-3)


def test_shear_free_additive_noise_synchronizes():
    e = make_model("shear_additive", {"sigma": 0.2, "b_shear": 0.0})
    p = sample_path(0, 1e-2, 220.0, channels=2)
    L = lyapunov_spectrum(e, p, [1.0, 0.0], t_max=200.0)
    assert L.exponents[0] < 0


def test_exponents_do_not_depend_on_start():
    e = make_model("hopf_linear", {"sigma": 0.3})
    p = sample_path(3, 1e-2, 120.0)
    a = lyapunov_spectrum(e, p, [0.0, 0.6], t_max=100.0)
    b = lyapunov_spectrum(e, p, [2.0, 1.6], t_max=100.0)
    se = np.hypot(a.standard_errors, b.standard_errors)
    assert np.all(np.abs(a.exponents - b.exponents) <= 2 * se + 1e-12)


def test_spread_over_paths_matches_standard_errors():
    e = make_model("hopf_linear", {"sigma": 0.3})
    res = [lyapunov_spectrum(e, sample_path(s, 1e-2, 60.0), [0.0, 1.0], t_max=40.0, block_time=4.0)
           for s in range(20)]
    lam2 = np.array([r.exponents[1] for r in res])
    se2 = np.mean([r.standard_errors[1] for r in res])
    ratio = lam2.std(ddof=1) / se2
    assert 1 / 3 <= ratio <= 3


def test_dt_mismatch_rejected():
    e = make_model("hopf_linear")
    with pytest.raises(ValueError):
        lyapunov_spectrum(e, sample_path(0, 1e-2, 30.0), [0.0, 1.0], t_max=10.0, dt=1e-3)
