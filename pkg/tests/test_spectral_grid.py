import numpy as np
import pytest

from zk_lab.errors import DomainError, GridMismatch, NaNDetected
from zk_lab.spectral_grid import (
    Field2D, Grid, SpectralInterpolant, derivative, integrate, load_field,
    save_field)


trig = Grid(np.pi, np.pi, 32, 32)


def wave(X1, X2):
    return np.sin(2 * X1) * np.cos(X2) + 0.5 * np.cos(3 * X2)


def test_grid_validation():
    with pytest.raises(DomainError):
        Grid(1.0, 1.0, 31, 32)
    with pytest.raises(DomainError):
        Grid(1.0, 1.0, 6, 32)
    with pytest.raises(DomainError):
        Grid(0.0, 1.0, 32, 32)


def test_axes():
    assert trig.x1[0] == -np.pi
    assert trig.x1[trig.N1 // 2] == pytest.approx(0.0, abs=1e-15)
    assert trig.dx1 == pytest.approx(2 * np.pi / 32)
    assert trig.spectral_shape == (32, 17)


def test_field_rejects_bad_values():
    with pytest.raises(GridMismatch):
        Field2D(trig, np.zeros((32, 30)))
    values = np.zeros(trig.shape)
    values[3, 4] = np.nan
    with pytest.raises(NaNDetected):
        Field2D(trig, values)


def test_derivatives_exact_for_trig_polynomials():
    f = Field2D.from_function(trig, wave)
    d1 = derivative(f, 1).values
    d22 = derivative(f, 2, 2).values
    X1, X2 = trig.X1, trig.X2
    np.testing.assert_allclose(d1, 2 * np.cos(2*X1) * np.cos(X2), atol=1e-12)
    np.testing.assert_allclose(
        d22, -np.sin(2*X1) * np.cos(X2) - 4.5 * np.cos(3*X2), atol=1e-11)
    np.testing.assert_allclose(
        trig.laplacian(f.values), -5 * np.sin(2*X1) * np.cos(X2)
        - 4.5 * np.cos(3*X2), atol=1e-11)


def test_quadrature_and_parseval():
    f = Field2D.from_function(trig, wave)
    assert integrate(Field2D(trig, np.ones(trig.shape))) == pytest.approx(
        4 * np.pi**2)
    exact = np.pi**2 * (1 + 0.5)
    assert trig.inner(f.values, f.values) == pytest.approx(exact, rel=1e-12)
    assert trig.spectral_energy(f.hat()) == pytest.approx(exact, rel=1e-12)
    grad2 = trig.spectral_energy(f.hat(), trig.ksq)
    g1, g2 = trig.gradient(f.values)
    assert grad2 == pytest.approx(trig.inner(g1, g1) + trig.inner(g2, g2),
                                  rel=1e-12)


def test_reflect_keeps_even_functions():
    f = np.cos(trig.X1) * np.cos(2 * trig.X2)
    np.testing.assert_allclose(trig.reflect(f, 1), f, atol=1e-14)
    np.testing.assert_allclose(trig.reflect(f, 2), f, atol=1e-14)
    g = np.sin(trig.X1)
    np.testing.assert_allclose(trig.reflect(g, 1), -g, atol=1e-14)


def test_dealias_mask():
    low = np.cos(trig.X1)
    high = np.cos(14 * trig.X1)
    assert np.abs(trig.ifft(trig.dealias(trig.fft(low))) - low).max() < 1e-14
    assert np.abs(trig.ifft(trig.dealias(trig.fft(high)))).max() < 1e-14


def test_interpolant_off_grid():
    f = Field2D.from_function(trig, wave)
    interp = SpectralInterpolant(f)
    p1 = np.array([-1.234, 0.1, 2.9])
    p2 = np.array([0.77, -3.0])
    P1, P2 = np.meshgrid(p1, p2, indexing='ij')
    np.testing.assert_allclose(interp(p1, p2), wave(P1, P2), atol=1e-12)
    np.testing.assert_allclose(interp(p1, p2, d1=1),
                               2 * np.cos(2*P1) * np.cos(P2), atol=1e-11)


def test_field_file(tmp_path):
    f = Field2D.from_function(trig, wave)
    path = str(tmp_path / 'f.bin')
    save_field(path, f, name='wave', t=1.5)
    g, meta = load_field(path)
    assert g.grid == trig
    np.testing.assert_array_equal(g.values, f.values)
    assert meta['name'] == 'wave'
    assert meta['t'] == 1.5
    with open(path, 'rb') as fp:
        blob = fp.read()
    with open(path, 'wb') as fp:
        fp.write(blob[:-8])
    with pytest.raises(GridMismatch):
        load_field(path)
