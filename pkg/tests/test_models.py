import numpy as np
import pytest
from scipy import integrate

from randiso.models import (
    CATALOG,
    ModelParameterError,
    ModelSpec,
    finite_difference_jacobian,
    ito_correction,
    make_model,
    one_sided_lipschitz_probe,
    stratonovich_to_ito,
)

STOCHASTIC = ["hopf_linear", "amplitude_phase", "noisy_phase", "shear_additive"]


def _states(entry, n=100, seed=0):
    rng = np.random.default_rng(seed)
    r = rng.uniform(0.4, 1.8, n)
    th = rng.uniform(-np.pi, np.pi, n)
    if entry.spec.chart == "polar":
        return np.stack([th, r], -1)
    return np.stack([r * np.cos(th), r * np.sin(th)], -1)


def test_hopf_without_noise_has_unit_cycle():
    e = make_model("hopf_linear", {"sigma": 0.0})
    x = np.array([[0.3, 1.0], [1.0, 1.0]])
    b = e.spec.drift(x)
    assert np.allclose(b[:, 1], 0.0)
    assert np.allclose(b[:, 0], 1.0)
    assert np.allclose(e.spec.diffusion(x), 0.0)


def test_amplitude_phase_carries_log_isochron():
    e = make_model("amplitude_phase", {"kappa": 2.0, "sigma": 0.2})
    iso = e.analytic.deterministic_isochron
    assert iso(0.4, 1.7) == pytest.approx((0.4 + np.log(1.7)) / 2.0)
    assert e.analytic.mean_period == pytest.approx(np.pi)


def test_hopf_radial_density_closed_form():
    sigma = 0.5
    p = make_model("hopf_linear", {"sigma": sigma}).analytic.stationary_radial_density
    r = np.linspace(0.2, 2.5, 7)
    shape = r ** (2 / sigma**2 - 1) * np.exp(-(r**2) / sigma**2)
    ratio = p(r) / shape
    assert np.allclose(ratio, ratio[0], rtol=1e-10)
    assert integrate.quad(p, 0, np.inf)[0] == pytest.approx(1.0, abs=1e-8)
    assert integrate.quad(lambda x: x**2 * p(x), 0, np.inf)[0] == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("name", list(CATALOG))
def test_catalog_entries_build(name):
    params = {}
    if name == "general_polar":
        params = {"f1": lambda th, r: 1 + 0 * r, "f2": lambda th, r: r - r**3,
                  "g1": lambda th, r: 0 * r, "g2": lambda th, r: r}
    e = make_model(name, params)
    x = _states(e, 5)
    assert e.spec.drift(x).shape == (5, 2)
    assert e.spec.diffusion(x).shape == (5, e.spec.channels, 2)


@pytest.mark.parametrize("bad", [
    ("nope", {}),
    ("hopf_linear", {"sigma": -0.1}),
    ("amplitude_phase", {"kappa": 0.5}),
    ("hopf_linear", {"R1": 1.2}),
    ("hopf_linear", {"R2": 0.9}),
])
def test_invalid_models_rejected(bad):
    with pytest.raises(ModelParameterError):
        make_model(*bad)


def test_additive_noise_has_no_correction():
    spec = make_model("shear_additive", {"sigma": 0.2}).spec
    x = _states(make_model("shear_additive"), 20)
    assert np.allclose(ito_correction(spec, x), 0.0)
    assert np.allclose(stratonovich_to_ito(spec).drift(x), spec.drift(x))


def test_linear_noise_correction_in_plane():
    sigma = 0.4
    e = make_model("hopf_linear", {"sigma": sigma}, chart="planar")
    x = _states(e, 20)
    assert np.allclose(ito_correction(e.spec, x), 0.5 * sigma**2 * x, atol=1e-12)
    ito = stratonovich_to_ito(e.spec)
    assert ito.ito
    assert np.allclose(ito.diffusion(x), e.spec.diffusion(x))


def test_radial_correction_in_polar_chart():
    sigma = 0.3
    e = make_model("hopf_linear", {"sigma": sigma})
    x = _states(e, 20)
    r = x[:, 1]
    b = stratonovich_to_ito(e.spec).drift(x)
    assert np.allclose(b[:, 1], r - r**3 + 0.5 * sigma**2 * r, atol=1e-12)


def test_conversion_requires_jacobians():
    spec = make_model("hopf_linear").spec
    from dataclasses import replace
    with pytest.raises(ValueError):
        stratonovich_to_ito(replace(spec, diffusion_jacobians=None))


@pytest.mark.parametrize("name", STOCHASTIC)
def test_jacobians_match_finite_differences(name):
    e = make_model(name, {"sigma": 0.3})
    x = _states(e, 100, seed=1)
    J = e.spec.drift_jacobian(x)
    errs = []
    for h in (1e-3, 1e-4):
        fd = finite_difference_jacobian(e.spec.drift, x, h)
        errs.append(np.max(np.abs(fd - J)))
        fdS = finite_difference_jacobian(e.spec.diffusion, x, h)
        assert np.max(np.abs(fdS - e.spec.diffusion_jacobians(x))) < 1e-5
    # second-order central differences: error shrinks with h until round-off
    assert errs[1] <= max(errs[0], 1e-8)
    assert errs[0] < 1e-4


def test_amplitude_phase_drift_is_one_sided_lipschitz():
    e = make_model("amplitude_phase", {"kappa": 2.0}, chart="planar")
    assert one_sided_lipschitz_probe(e.spec, 10_000) <= 1 + 1e-12


def test_linear_contraction_ratio_is_minus_one():
    spec = ModelSpec("lin", "planar", 1, lambda x: -x, lambda x: np.zeros(x.shape[:-1] + (1, 2)),
                     None, None)
    assert one_sided_lipschitz_probe(spec, 500) == pytest.approx(-1.0)


def test_dissipative_outside_large_ball():
    e = make_model("amplitude_phase", {"kappa": 2.0}, chart="planar")
    assert one_sided_lipschitz_probe(e.spec, 10_000, region=(np.sqrt(3), 6.0)) <= -0.5


def test_probe_rejects_polar_chart():
    with pytest.raises(ValueError):
        one_sided_lipschitz_probe(make_model("hopf_linear").spec, 10)


def test_default_phase_noise_is_bounded():
    e = make_model("noisy_phase", {"sigma": 0.3})
    r = np.linspace(0, 50, 1001)
    assert np.all(np.abs(e.skew.htilde(r)) <= e.spec.params["sigma_theta"])


def test_planar_and_polar_charts_agree():
    pol = make_model("amplitude_phase", {"kappa": 2.0, "sigma": 0.3})
    pla = make_model("amplitude_phase", {"kappa": 2.0, "sigma": 0.3}, chart="planar")
    x = _states(pol, 10)
    th, r = x[:, 0], x[:, 1]
    b = pol.spec.drift(x)
    xy = np.stack([r * np.cos(th), r * np.sin(th)], -1)
    bp = pla.spec.drift(xy)
    # d/dt (r cos th) = r' cos th - r th' sin th
    want = np.stack([b[:, 1] * np.cos(th) - r * b[:, 0] * np.sin(th),
                     b[:, 1] * np.sin(th) + r * b[:, 0] * np.cos(th)], -1)
    assert np.allclose(bp, want, atol=1e-12)
