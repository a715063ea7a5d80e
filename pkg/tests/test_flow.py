import numpy as np
import pytest
from scipy import integrate

from randiso.flow import (
    FlowEscapeError,
    ensemble_flow,
    flow,
    variational_flow,
)
from randiso.models import make_model
from randiso.noise import sample_path, shift, zero_path


def _explicit_radius(path, r0, t_end, sigma):
    """Closed-form Hopf radius with the time integral done by the trapezoid rule."""
    t = path.times_between(0.0, t_end)
    W = path.values_between(0.0, t_end)[:, 0]
    J = integrate.cumulative_trapezoid(np.exp(2 * t + 2 * sigma * W), t, initial=0.0)
    return r0 * np.exp(t + sigma * W) / np.sqrt(1 + 2 * r0**2 * J)


def test_deterministic_cycle_is_exact():
    e = make_model("hopf_linear", {"sigma": 0.0})
    dt = 2 * np.pi / 6000
    p = zero_path(dt, 7000 * dt)
    res = flow(e, p, 0.0, 6000 * dt, [0.4, 1.0], record_every=0)
    assert np.allclose(res.final_state, [0.4 + 2 * np.pi, 1.0], atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_hopf_radius_matches_explicit_solution(seed):
    sigma = 0.3
    e = make_model("hopf_linear", {"sigma": sigma})
    p = sample_path(seed, 1e-3, 5.0)
    for r0 in (0.5, 1.7):
        res = flow(e, p, 0.0, 5.0, [0.0, r0])
        want = _explicit_radius(p, r0, 5.0, sigma)
        assert np.max(np.abs(res.states[:, 1] - want)) <= 5e-3


def test_cocycle_property():
    e = make_model("amplitude_phase", {"sigma": 0.3})
    p = sample_path(3, 1e-2, 10.0)
    x0 = np.array([0.2, 0.8])
    a, b = 1.3, 2.1
    whole = flow(e, p, 0.0, a + b, x0, record_every=0).final_state
    first = flow(e, p, 0.0, a, x0, record_every=0).final_state
    second = flow(e, shift(p, a), 0.0, b, first, record_every=0).final_state
    assert np.allclose(whole, second, atol=1e-10)
    assert np.allclose(flow(e, p, a, b, first, record_every=0).final_state, second, atol=1e-12)


def test_batch_points_share_noise():
    e = make_model("hopf_linear", {"sigma": 0.5})
    p = sample_path(4, 1e-2, 3.0)
    X = np.array([[0.0, 0.5], [1.0, 1.5]])
    batch = flow(e, p, 0.0, 2.0, X, record_every=0).final_state
    for i in range(2):
        single = flow(e, p, 0.0, 2.0, X[i], record_every=0).final_state
        assert np.allclose(batch[i], single, atol=1e-13)


def test_ensemble_flow_matches_single_paths():
    e = make_model("amplitude_phase", {"sigma": 0.3})
    paths = [sample_path(s, 1e-2, 3.0) for s in range(3)]
    X = np.array([[0.0, 0.5], [1.0, 1.5]])
    out = ensemble_flow(e, paths, 0.0, 2.0, X)
    assert out.shape == (3, 2, 2)
    for k, p in enumerate(paths):
        assert np.allclose(out[k], flow(e, p, 0.0, 2.0, X, record_every=0).final_state, atol=1e-12)


def test_dt_mismatch_and_negative_duration_rejected():
    e = make_model("hopf_linear")
    p = sample_path(0, 1e-2, 2.0)
    with pytest.raises(ValueError):
        flow(e, p, 0.0, 1.0, [0, 1], dt=1e-3)
    with pytest.raises(ValueError):
        flow(e, p, 0.0, -1.0, [0, 1])
    with pytest.raises(ValueError):
        flow(e, p, 0.0, 1.0, [0, 1], scheme="rk4")


def test_missing_noise_channel_rejected():
    e = make_model("shear_additive", {"sigma": 0.2})
    with pytest.raises(ValueError, match="channel"):
        flow(e, sample_path(0, 1e-2, 2.0), 0.0, 1.0, [1.0, 0.0])


def test_escape_is_reported():
    e = make_model("hopf_linear", {"sigma": 0.0})
    p = zero_path(1e-1, 2.0)
    with pytest.raises(FlowEscapeError):
        flow(e, p, 0.0, 1.0, [0.0, 25.0])


def test_schemes_agree_to_first_order():
    e = make_model("hopf_linear", {"sigma": 0.3}, chart="planar")
    gaps = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        p = sample_path(5, 2.5e-3, 2.0).coarsen(int(round(dt / 2.5e-3)))
        h = flow(e, p, 0.0, 1.0, [0.8, 0.1], record_every=0).final_state
        m = flow(e, p, 0.0, 1.0, [0.8, 0.1], scheme="euler_maruyama_ito", record_every=0).final_state
        gaps.append(np.linalg.norm(h - m))
    C = max(g / dt for g, dt in zip(gaps, (1e-2, 5e-3, 2.5e-3)))
    assert gaps[-1] < gaps[0]
    assert C < 10.0


def test_variational_identity_at_time_zero():
    e = make_model("amplitude_phase", {"sigma": 0.3})
    p = sample_path(0, 1e-3, 1.0)
    res = variational_flow(e, p, 0.0, 0.0, [0.1, 0.9])
    assert np.allclose(res.jacobian, np.eye(2))


@pytest.mark.parametrize("name,chart", [("amplitude_phase", "polar"),
                                        ("hopf_linear", "planar"),
                                        ("shear_additive", "planar")])
def test_jacobian_matches_finite_differences(name, chart):
    e = make_model(name, {"sigma": 0.3}, chart=chart)
    p = sample_path(2, 1e-3, 1.5, channels=e.spec.channels)
    x0 = np.array([0.6, 0.7])
    J = variational_flow(e, p, 0.0, 1.0, x0).jacobian
    h = 1e-5
    for j in range(2):
        d = np.zeros(2)
        d[j] = h
        col = (flow(e, p, 0.0, 1.0, x0 + d, record_every=0).final_state
               - flow(e, p, 0.0, 1.0, x0 - d, record_every=0).final_state) / (2 * h)
        assert np.linalg.norm(col - J[:, j]) <= 1e-3 * np.linalg.norm(J[:, j])


@pytest.mark.parametrize("name,chart", [("hopf_linear", "planar"), ("shear_additive", "planar"),
                                        ("amplitude_phase", "polar")])
def test_liouville_identity(name, chart):
    e = make_model(name, {"sigma": 0.3, "b_shear": 2.0} if name == "shear_additive" else {"sigma": 0.3},
                   chart=chart)
    p = sample_path(6, 1e-3, 3.0, channels=e.spec.channels)
    t = 3.0
    res = variational_flow(e, p, 0.0, t, [0.9, 0.3])
    assert abs(res.log_det - res.liouville) <= 1e-3 * t
    assert res.trajectory.final_state == pytest.approx(
        flow(e, p, 0.0, t, [0.9, 0.3], record_every=0).final_state, abs=1e-12)
