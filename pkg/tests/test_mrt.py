import numpy as np
import pytest

from randiso.isochron import forward_isochrons
from randiso.models import make_model, radial_density
from randiso.mrt import (
    AnnulusGrid,
    MRTError,
    build_operators,
    expected_period_compare,
    face_flux_period,
    interpolate_field,
    isophase,
    mean_flux_period,
    probe_double_expectation,
    solve_mrt,
    stationary_density,
)
from randiso.noise import zero_path

TWO_PI = 2 * np.pi
FINE = AnnulusGrid(0.3, 2.0, 256, 128)


def _solve(entry, grid):
    ops = build_operators(entry, grid)
    dens = stationary_density(ops)
    _, Tb, _ = mean_flux_period(dens, entry, grid)
    return ops, dens, Tb, solve_mrt(ops, dens, Tb, entry=entry)


@pytest.fixture(scope="module")
def hopf():
    return make_model("hopf_linear", {"sigma": 0.5})


@pytest.fixture(scope="module")
def hopf_solved(hopf):
    return _solve(hopf, FINE)


@pytest.fixture(scope="module")
def amp():
    return make_model("amplitude_phase", {"sigma": 0.3, "kappa": 2.0})


@pytest.fixture(scope="module")
def amp_solved(amp):
    return _solve(amp, FINE)


def test_grid_validation():
    with pytest.raises(ValueError):
        AnnulusGrid(1.0, 0.5, 64, 32)
    with pytest.raises(ValueError):
        AnnulusGrid(0.3, 2.0, 4, 32)


def test_quadrature_is_exact_for_linear_radial_functions():
    g = AnnulusGrid(0.3, 2.0, 32, 17)
    assert g.integrate(np.ones((32, 17))) == pytest.approx(TWO_PI * 1.7)
    assert g.integrate(g.mesh()[1]) == pytest.approx(np.pi * (2.0**2 - 0.3**2))


def test_generator_annihilates_constants(amp):
    ops = build_operators(amp, AnnulusGrid(0.3, 2.0, 64, 32))
    assert np.max(np.abs(ops.backward @ np.ones(ops.w.size))) <= 1e-10


def test_discrete_adjointness(amp):
    ops = build_operators(amp, AnnulusGrid(0.3, 2.0, 64, 32))
    rng = np.random.default_rng(0)
    for _ in range(10):
        u, v = rng.normal(size=(2, ops.w.size))
        lhs = np.dot(ops.w * (ops.backward @ u), v)
        rhs = np.dot(ops.w * u, ops.forward @ v)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1.0)


def test_forward_operator_on_analytic_density(hopf):
    ops = build_operators(hopf, FINE)
    TH, R = FINE.mesh()
    rho = radial_density(0.5)(R) / TWO_PI
    assert np.max(np.abs(ops.forward @ rho.ravel())) <= 1e-3


def test_planar_chart_rejected():
    with pytest.raises(MRTError):
        build_operators(make_model("shear_additive"), AnnulusGrid(0.3, 2.0, 32, 16))


def test_density_radial_marginal(hopf_solved):
    _, dens, _, _ = hopf_solved
    p = radial_density(0.5)(FINE.r)
    p = p / np.sum(FINE.r_weights * p)
    marg = dens.rho.sum(axis=0) * FINE.dtheta
    assert np.max(np.abs(marg - p)) <= 1e-2
    assert FINE.integrate(dens.rho * FINE.mesh()[1] ** 2) == pytest.approx(1.0, abs=5e-3)


@pytest.mark.parametrize("which", ["hopf_solved", "amp_solved"])
def test_density_normalized_and_uniform_in_phase(which, request):
    _, dens, _, _ = request.getfixturevalue(which)
    assert abs(FINE.integrate(dens.rho) - 1.0) <= 1e-12
    assert dens.min_before_clip >= -1e-12
    theta_marg = dens.rho @ FINE.r_weights
    assert np.max(np.abs(theta_marg - 1 / TWO_PI)) <= 1e-3


def test_flux_periods(hopf, hopf_solved, amp, amp_solved):
    assert hopf_solved[2] == pytest.approx(TWO_PI, rel=1e-2)
    assert amp_solved[2] == pytest.approx(np.pi, rel=1e-2)
    for entry, (ops, dens, Tb, _) in ((hopf, hopf_solved), (amp, amp_solved)):
        _, T2, _ = mean_flux_period(dens, entry, FINE, lambda r: 0.3 * (r - FINE.R1))
        assert T2 == pytest.approx(Tb, rel=5e-3)
        assert face_flux_period(ops, dens)[1] == pytest.approx(Tb, rel=5e-3)


def test_flux_conserved_across_sections(amp, amp_solved):
    _, dens, Tb, _ = amp_solved
    for section in (lambda r: 0 * r + 1.0, lambda r: 2.5 + 0.2 * np.sin(3 * r),
                    lambda r: -0.5 * (r - 0.3)):
        _, T, _ = mean_flux_period(dens, amp, FINE, section)
        assert T == pytest.approx(Tb, rel=5e-3)


def test_mrt_solution_quality(hopf_solved, amp_solved):
    for _, _, _, f in (hopf_solved, amp_solved):
        assert f.residual <= 1e-8
        assert f.isophase_residual <= 1e-6
        assert f.jump_error <= 1e-6


def test_hopf_isophase_is_angle(hopf_solved):
    f = hopf_solved[3]
    TH, _ = FINE.mesh()
    d = f.isophase - TH
    assert np.ptp(d) <= 1e-3


def test_gauge_shift_changes_field_by_constant(amp_solved):
    ops, dens, Tb, f = amp_solved
    g = solve_mrt(ops, dens, Tb, gauge_theta_index=37)
    assert np.ptp(g.u - f.u) <= 1e-8


def test_inconsistent_period_rejected(amp_solved):
    ops, dens, Tb, _ = amp_solved
    with pytest.raises(MRTError):
        solve_mrt(ops, dens, 1.05 * Tb)


def test_isophase_matches_log_isochrons(amp_solved):
    f = amp_solved[3]
    TH, R = FINE.mesh()
    kappa = 2.0
    diff = f.isophase - (TH + np.log(R)) * TWO_PI / (kappa * f.Tbar)
    w = FINE.weights * amp_solved[1].rho
    c = np.sum(w * diff) / np.sum(w)
    assert np.sqrt(np.sum(w * (diff - c) ** 2)) <= 1e-2


def test_isophase_refines_at_second_order(amp, amp_solved):
    def err(sol, grid):
        f, rho = sol[3], sol[1].rho
        TH, R = grid.mesh()
        diff = f.isophase - (TH + np.log(R)) * TWO_PI / (2.0 * f.Tbar)
        w = grid.weights * rho
        c = np.sum(w * diff) / np.sum(w)
        return np.sqrt(np.sum(w * (diff - c) ** 2))

    coarse = AnnulusGrid(0.3, 2.0, 128, 64)
    assert err(_solve(amp, coarse), coarse) / err(amp_solved, FINE) >= 3.0


def test_isophase_level_sets_match_deterministic_isochrons(amp_solved):
    f = amp_solved[3]
    det = make_model("amplitude_phase", {"sigma": 0.0, "kappa": 2.0})
    r = np.linspace(0.6, 1.6, 11)
    slope = TWO_PI / (2.0 * f.Tbar)
    for c in forward_isochrons(det, zero_path(1e-3, 40.0), [0.5, 3.0], r):
        vals = interpolate_field(f, c.theta, c.r, field="isophase")
        assert np.ptp(vals) / slope <= 1e-3


def test_interpolation_reproduces_nodes_and_jump(amp_solved):
    f = amp_solved[3]
    th, r = FINE.theta[[0, 10, 200]], FINE.r[[0, 64, 127]]
    assert np.allclose(interpolate_field(f, th, r), f.u[[0, 10, 200], [0, 64, 127]])
    a = interpolate_field(f, np.array([0.3]), np.array([1.0]))
    b = interpolate_field(f, np.array([0.3 + TWO_PI]), np.array([1.0]))
    assert b - a == pytest.approx(-f.Tbar, rel=1e-12)
    assert np.isnan(interpolate_field(f, np.array([0.0]), np.array([2.5]))[0])


def test_wrapped_isophase_range(amp_solved):
    w = isophase(amp_solved[3], wrapped=True)
    assert w.min() >= 0 and w.max() < TWO_PI


def test_hopf_expected_period_identity(hopf):
    fields = _solve(hopf, AnnulusGrid(0.3, 2.0, 128, 64))[3]
    rep = expected_period_compare(hopf, AnnulusGrid(0.3, 2.0, 128, 64), range(40), dt=1e-2,
                                  fields=fields)
    assert np.allclose(rep["periods"], TWO_PI, atol=1e-6)
    assert rep["E_T"] == pytest.approx(TWO_PI, abs=1e-6)
    assert abs(rep["period_gap"]) <= 0.01 * TWO_PI
    assert rep["identity_rhs"] == pytest.approx(TWO_PI, rel=1e-2)
    assert 0 <= rep["ks_statistic"] <= 1


def test_hopf_double_expectation_is_time():
    hopf = make_model("hopf_linear", {"sigma": 0.3})
    rows = probe_double_expectation(hopf, [0.0, 1.0, 2.0], range(6), range(100, 106), dt=1e-2)
    assert [r["t"] for r in rows] == [0.0, 1.0, 2.0]
    for row in rows:
        assert abs(row["deviation"]) <= 1e-6
        assert row["ci95"][0] <= row["mean"] <= row["ci95"][1]
        assert row["n"] + row["rejected"] == 36
