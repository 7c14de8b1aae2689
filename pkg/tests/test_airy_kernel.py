import math

import numpy as np
import pytest
import scipy.special

from zk_lab.airy_kernel import (
    AiryMethod, Region, apply_S, airy, airy_eval, airy_prime, certify_decay,
    certify_duhamel, certify_factorization, certify_linear_decay,
    check_duhamel_hypotheses, convolve_direct, decay_law, decay_variables,
    duhamel_field, kernel_A, kernel_Ax, kernel_B, region_of, tail_profile,
    window_sups)
from zk_lab.errors import BoxTooSmall, DomainError, HypothesisViolated
from zk_lab.spectral_grid import Field2D, Grid


TWO_PI = 2 * math.pi


def test_airy_at_zero():
    expected = TWO_PI * 3**(-2/3) / math.gamma(2/3)
    assert airy(0.0) == pytest.approx(expected, rel=1e-14)
    assert airy_eval(0.0).value == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize('x', [-6.5, -2.0, 0.3, 1.0, 5.5])
def test_airy_series(x):
    ai, aip, _, _ = scipy.special.airy(x)
    result = airy_eval(x, AiryMethod.SERIES)
    assert result.method == AiryMethod.SERIES
    assert result.value == pytest.approx(TWO_PI * ai, rel=1e-9, abs=1e-10)
    assert result.derivative == pytest.approx(TWO_PI * aip, rel=1e-9,
                                              abs=1e-10)


@pytest.mark.parametrize('x', [-12.0, -8.0, 7.0, 10.0])
def test_airy_asymptotic(x):
    ai, aip, _, _ = scipy.special.airy(x)
    result = airy_eval(x)
    assert result.method == AiryMethod.ASYMPTOTIC
    assert result.value == pytest.approx(TWO_PI * ai, rel=1e-9, abs=1e-11)
    assert result.derivative == pytest.approx(TWO_PI * aip, rel=1e-9,
                                              abs=1e-11)


@pytest.mark.parametrize('x', [-3.0, 0.0, 2.0])
def test_airy_quadrature(x):
    ai, aip, _, _ = scipy.special.airy(x)
    result = airy_eval(x, AiryMethod.QUADRATURE)
    assert result.value == pytest.approx(TWO_PI * ai, rel=1e-8, abs=1e-9)
    assert result.derivative == pytest.approx(TWO_PI * aip, rel=1e-8,
                                              abs=1e-9)


def test_airy_vectorised():
    x = np.linspace(-5, 5, 11)
    ai, aip, _, _ = scipy.special.airy(x)
    np.testing.assert_allclose(airy(x), TWO_PI * ai, rtol=1e-14)
    np.testing.assert_allclose(airy_prime(x), TWO_PI * aip, rtol=1e-14)


def test_airy_asymptotic_domain():
    with pytest.raises(DomainError):
        airy_eval(0.0, AiryMethod.ASYMPTOTIC)


def test_kernel_symmetry_and_scaling():
    rng = np.random.default_rng(1)
    x, y = rng.uniform(-4, 4, (2, 30))
    t = rng.uniform(0.2, 3, 30)
    np.testing.assert_allclose(kernel_A(x, y, t), kernel_A(x, -y, t),
                               rtol=1e-14, atol=0)
    scaled = t**(-2/3) * kernel_A(x * t**(-1/3), y * t**(-1/3), 1.0)
    np.testing.assert_allclose(kernel_A(x, y, t), scaled,
                               rtol=1e-10, atol=1e-12)


def test_kernel_derivative():
    x = np.array([-3.0, -0.5, 0.4, 2.0])
    y = np.array([0.5, -1.0, 0.0, 0.7])
    h = 1e-5
    fd = (kernel_A(x + h, y, 0.8) - kernel_A(x - h, y, 0.8)) / (2 * h)
    np.testing.assert_allclose(kernel_Ax(x, y, 0.8), fd,
                               rtol=1e-6, atol=1e-8)


def test_kernel_needs_positive_time():
    with pytest.raises(DomainError):
        kernel_A(1.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        kernel_Ax(1.0, 0.0, -1.0)


@pytest.mark.parametrize('x', [3.0, -3.0])
def test_kernel_B_scaling_form(x):
    t = 0.7
    y = 0.8
    lam, Z = decay_variables(x, y, t)
    mu = lam / (2 * math.sqrt(3))
    expected = t**(-2/3) * lam**(2/3) * kernel_B(mu, Z, np.sign(x))
    assert float(kernel_A(x, y, t)) == pytest.approx(
        float(expected) / (2 * math.sqrt(3)), rel=1e-12)


def test_regions():
    assert region_of(1.0, 4.0) == Region.X_POS_Z_SMALL
    assert region_of(1.0, 4.5) == Region.X_POS_Z_LARGE
    assert region_of(-1.0, -0.5) == Region.X_NEG_Z_SMALL
    assert region_of(-1.0, -7.0) == Region.X_NEG_Z_LARGE
    with pytest.raises(DomainError):
        decay_law(Region.X_NEG_Z_SMALL, Z=6.0)


def test_factorization_against_quadrature():
    check = certify_factorization(n_points=6)
    assert check.passed
    assert check.max_imag < 1e-6
    assert check.n_points == 6


def test_decay_oscillatory_region():
    fit = certify_decay(decay_law(Region.X_NEG_Z_SMALL))
    assert fit.predicted == pytest.approx(-1/6)
    assert fit.passed
    assert fit.n_points > 50


def test_decay_superpolynomial_region():
    fit = certify_decay(decay_law(Region.X_POS_Z_SMALL))
    assert fit.passed
    assert fit.slope < -5


@pytest.fixture(scope='module')
def box():
    return Grid(32.0, 32.0, 256, 256)


@pytest.fixture(scope='module')
def gaussian(box):
    return Field2D(box, np.exp(-(box.X1 - 1)**2 - box.X2**2))


def test_linear_flow_group(gaussian):
    grid = gaussian.grid
    later = apply_S(0.5, gaussian)
    assert later.l2() == pytest.approx(gaussian.l2(), rel=1e-12)
    twice = apply_S(0.3, apply_S(0.2, gaussian))
    np.testing.assert_allclose(twice.values, later.values, atol=1e-12)
    shifted = apply_S(0.0, gaussian, shift=2.0)
    np.testing.assert_allclose(
        shifted.values, np.roll(gaussian.values, -int(2.0 / grid.dx1), 0),
        atol=1e-12)
    with pytest.raises(DomainError):
        apply_S(-0.1, gaussian)


def test_linear_flow_against_convolution(gaussian):
    grid = gaussian.grid
    t, shift = 0.1, 0.1
    flowed = apply_S(t, gaussian, shift=shift).values
    points = [(0.0, 0.0), (-2.0, 1.0), (1.5, -0.5)]
    direct = convolve_direct(gaussian, t, points, shift=shift)
    index = [(int(round((px + grid.L1) / grid.dx1)),
              int(round((py + grid.L2) / grid.dx2))) for px, py in points]
    np.testing.assert_allclose(direct, [flowed[i, j] for i, j in index],
                               atol=1e-8)


def test_tail_profile_and_windows():
    grid = Grid(128.0, 8.0, 1024, 32)
    phi = tail_profile(grid, 6.0)
    assert phi.values.max() == pytest.approx(1.0)
    starts, sups = window_sups(phi, 10.0, 60.0)
    assert starts[0] == 10.0
    assert np.all(np.diff(sups) < 0)
    with pytest.raises(BoxTooSmall):
        window_sups(phi, 10.0, 70.0)


def test_linear_decay_sigma_range():
    with pytest.raises(DomainError):
        certify_linear_decay(2.0)


def test_duhamel_hypotheses():
    sigma = 8.0
    ok = check_duhamel_hypotheses(1.75, 3 * sigma - 21/4, 2 * sigma - 15/2,
                                  1.75)
    assert ok.passed
    assert ok.failures == []
    sigma = 6.0
    bad = check_duhamel_hypotheses(1.75, 3 * sigma - 21/4, 2 * sigma - 15/2,
                                   1.75)
    assert not bad.passed
    assert 'sigma1, sigma2 >= 11/2' in bad.failures
    assert not check_duhamel_hypotheses(1.0, 20, 10, 0).passed


def test_duhamel_zero_forcing():
    grid = Grid(64.0, 8.0, 256, 32)
    D = duhamel_field(2.0, 1.75, 18.75, 8.5, grid, amplitude=0.0)
    assert np.all(D.values == 0)


def test_duhamel_violated_hypotheses_warn():
    grid = Grid(128.0, 8.0, 1024, 32)
    with pytest.warns(HypothesisViolated):
        report = certify_duhamel(1.75, 12.75, 4.5, 1.75, t_small=(0.5,),
                                 t_large=(2.0,), x_window=(10.0, 40.0),
                                 grid=grid)
    assert not report.passed
    assert not report.hypotheses.passed
    assert set(report.slopes) == {0.5, 2.0}
