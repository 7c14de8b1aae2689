from types import SimpleNamespace

import numpy as np
import pytest

from zk_lab.functionals import (
    I_localized, J_A, K_A_series, MonotonicityProbe, VirialConfig,
    monotonicity_sweep, phi_A, pointwise_tail, psi, psi_derivatives,
    remainder_majorant, right_tail_mass, slope_constant, slope_report,
    soliton_frame_tail, tail_decay_fit, virial_rate_audit)
from zk_lab.modulation import Modulation, ModulationState, RateEstimate
from zk_lab.spectral_grid import Field2D, Grid


def test_psi():
    x = np.linspace(-60, 60, 241)
    assert psi(0.0, 4) == pytest.approx(0.5)
    np.testing.assert_allclose(psi(x, 4) + psi(-x, 4), 1, atol=1e-15)
    assert np.all(np.diff(psi(x, 4)) > 0)
    assert psi(-200.0, 4) > 0
    assert psi(200.0, 4) == 1.0


def test_psi_derivatives():
    M = 4.0
    x = np.linspace(-20, 20, 4001)
    h = x[1] - x[0]
    d1, d2, d3 = psi_derivatives(x, M)
    fd1 = np.gradient(psi(x, M), h)
    fd2 = np.gradient(d1, h)
    fd3 = np.gradient(d2, h)
    inner = slice(2, -2)
    np.testing.assert_allclose(d1[inner], fd1[inner], atol=1e-6)
    np.testing.assert_allclose(d2[inner], fd2[inner], atol=1e-6)
    np.testing.assert_allclose(d3[inner], fd3[inner], atol=1e-6)


def test_phi_A():
    A = 4.0
    assert phi_A(-10.0, A) == 1
    assert phi_A(A, A) == 1
    assert phi_A(1.5 * A, A) == pytest.approx(0.5)
    assert phi_A(2 * A, A) == 0
    assert phi_A(30.0, A) == 0
    y = np.linspace(0, 3 * A, 12001)
    slope = np.abs(np.gradient(phi_A(y, A), y))
    assert slope.max() == pytest.approx(15 / (8 * A), rel=1e-4)


def test_parameter_validation():
    with pytest.raises(ValueError):
        VirialConfig(0.5, 1.0)
    with pytest.raises(ValueError):
        MonotonicityProbe(3.0, 2.0)
    with pytest.raises(ValueError):
        MonotonicityProbe(4.0, 0.0)
    weight = MonotonicityProbe(4, 2)
    assert weight.M == 4.0
    assert weight.t0 == 0.0


def test_J_A_linear(gs):
    cfg = VirialConfig.from_ground_state(gs, 8)
    zero = Field2D.zeros(gs.grid)
    assert J_A(zero, gs, cfg) == (0.0, 0.0)
    eps = Field2D(gs.grid, 1e-3 * np.exp(-gs.grid.X1**2 - gs.grid.X2**2))
    double = Field2D(gs.grid, 2 * eps.values)
    j1 = J_A(eps, gs, cfg)
    j2 = J_A(double, gs, cfg)
    assert j2.value == pytest.approx(2 * j1.value, rel=1e-12)
    assert j2.bound_ratio == pytest.approx(j1.bound_ratio, rel=1e-12)


def test_slope_constant(gs, spectrum):
    grid = gs.grid
    Q = gs.Q.values
    chi = spectrum.chi0.values
    a = -grid.inner(chi, Q) / grid.inner(chi, chi)
    b = slope_constant(gs, spectrum)
    assert b == pytest.approx(grid.inner(Q + a * chi, Q), rel=1e-10)
    assert 0 < b < gs.mass
    assert slope_constant(gs, SimpleNamespace(chi0=gs.Q)) == pytest.approx(
        0, abs=1e-10)


def test_K_A_series_and_slope():
    t = np.linspace(0, 4, 41)
    rows = [{'t': ti, 'lam': 1.0, 'x1': ti, 'JA': 2.0 + 0.5 * ti,
             'eps_l2': 0.1, 'eps_h1': 0.2} for ti in t]
    series = K_A_series(rows, kappa=2.0, A=8.0, b=1.0, n=4)
    np.testing.assert_allclose(series.s, t)
    np.testing.assert_allclose(series.KA, 0.5 * t, atol=1e-15)
    np.testing.assert_allclose(series.dKA_ds, 0.5, rtol=1e-10)
    assert np.all(np.isnan(series.I))
    report = slope_report(series)
    assert report.slope_min == pytest.approx(0.5)
    assert report.predicted == pytest.approx(0.5)
    assert report.scaled_slope == pytest.approx(1.0)
    assert report.monotone


def test_K_A_series_rescaled_time():
    t = np.linspace(0, 1, 11)
    rows = [{'t': ti, 'lam': 0.5, 'x1': 0.0, 'JA': 1.0,
             'eps_l2': 0.0, 'eps_h1': 0.0} for ti in t]
    series = K_A_series(rows, kappa=0.0, A=4.0)
    np.testing.assert_allclose(series.s, 8 * t)
    np.testing.assert_allclose(series.KA, 0.5)
    assert slope_report(series).predicted is None


def test_I_localized(gs):
    u = gs.Q
    weight = MonotonicityProbe(4, 2)
    mass = I_localized(u, 0.0, 0.0, 0.0, weight, full=True)
    assert mass == pytest.approx(gs.mass, rel=1e-12)
    I = I_localized(u, 0.0, 0.0, 0.0, weight)
    assert 0 < I < mass
    later = I_localized(u, 0.0, 1.0, 0.0, weight)
    assert later > I


@pytest.fixture
def line_grid():
    return Grid(24.0, 8.0, 384, 64)


def test_monotonicity_sweep(line_grid):
    grid = line_grid
    times = np.linspace(0, 4, 9)
    profile = np.exp(-grid.x1**2)
    still = np.tile(profile, (times.size, 1))
    zeros = np.zeros(times.size)
    report = monotonicity_sweep(grid, times, still, zeros, zeros, 4)
    assert report.theta_fit == 0
    assert sorted(report.per_x0) == [2.0, 4.0, 8.0, 16.0]
    moving = np.array([np.exp(-(grid.x1 - 3 * t)**2) for t in times])
    report = monotonicity_sweep(grid, times, moving, zeros, zeros, 4)
    assert report.theta_fit > 0


def test_tail_decay_fit(line_grid):
    grid = line_grid
    eps = Field2D(grid, np.exp(-np.abs(grid.X1) - grid.X2**2))
    masses, slope = tail_decay_fit(eps, [2, 4, 6, 8])
    assert slope == pytest.approx(-2, rel=1e-3)
    assert masses[0] == pytest.approx(right_tail_mass(eps, 2))


def test_soliton_frame_tail(gs):
    masses, C = soliton_frame_tail(gs.Q, 0.0, [2, 4, 8], 4)
    assert np.all(np.diff(masses) < 0)
    assert C == pytest.approx(np.max(masses * np.exp(np.array([2, 4, 8]) / 4)))
    shifted, _ = soliton_frame_tail(gs.Q, -5.0, [2, 4, 8], 4, offset=-5.0)
    np.testing.assert_allclose(shifted, masses, rtol=1e-12)


def test_pointwise_tail(line_grid):
    grid = line_grid
    eps = Field2D(grid, np.maximum(np.abs(grid.X1), 1.0)**-3.0)
    starts, sups, slope = pointwise_tail(eps, 2.0)
    np.testing.assert_allclose(starts, [2, 4, 8])
    np.testing.assert_allclose(sups, starts**-3.0)
    assert slope == pytest.approx(-3)


def test_virial_identity_on_soliton(gs, spectrum):
    modulation = Modulation(gs, spectrum)
    zero = Field2D.zeros(gs.grid)
    state = ModulationState(lam=1.0, x1=0.0, eps=zero, ortho_res=(0, 0, 0),
                            eps_h1=0.0, eps_l2=0.0, x2=0.0, iterations=0)
    rates = RateEstimate(lam_rate=1.0, x_rate=1.0, bound_rhs=0.0,
                         control_ratio=0.0, det=1.0)
    cfg = VirialConfig.from_ground_state(gs, 16)
    report = virial_rate_audit(modulation, [state], [rates], cfg)
    row, = report.rows
    assert row['scaling_term'] == pytest.approx(gs.kappa)
    assert row['mass_term'] == 0
    assert abs(row['R']) < 1e-4 * gs.kappa
    assert row['majorant'] == pytest.approx(2 / 16)
    assert report.C_fit < 1e-3
    assert remainder_majorant(zero, gs, 16, 0.0, 0.0) == 0


def test_virial_audit_remainder_from_trajectory(gs, spectrum):
    modulation = Modulation(gs, spectrum)
    base = spectrum.chi0.values * 1e-3
    states = [
        ModulationState(lam=1.0, x1=0.0, eps=Field2D(gs.grid, c * base),
                        ortho_res=(0, 0, 0), eps_h1=0.0, eps_l2=0.0,
                        x2=0.0, iterations=0)
        for c in (1.0, 2.0, 4.0)]
    rates = [RateEstimate(lam_rate=0.0, x_rate=0.0, bound_rhs=0.0,
                          control_ratio=0.0, det=1.0)] * 3
    cfg = VirialConfig.from_ground_state(gs, 8)
    slow = virial_rate_audit(modulation, states, rates, cfg,
                             t=[0.0, 1.0, 2.0])
    fast = virial_rate_audit(modulation, states, rates, cfg,
                             t=[0.0, 0.1, 0.2])
    for row in slow.rows + fast.rows:
        assert row['R'] == pytest.approx(
            row['dJA_ds_fd'] - row['scaling_term'] - row['mass_term'])
    for a, b in zip(slow.rows, fast.rows):
        assert a['R_rhs'] == b['R_rhs']
        assert b['dJA_ds_fd'] == pytest.approx(10 * a['dJA_ds_fd'])
        assert a['R'] != pytest.approx(b['R'])
    untimed = virial_rate_audit(modulation, states, rates, cfg)
    for row in untimed.rows:
        assert row['dJA_ds_fd'] is None
        assert row['R'] == row['R_rhs']
