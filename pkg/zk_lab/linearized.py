"""
The linearized operator L = -Delta + 1 - 3 Q^2 around the ground state: its
negative eigenpair, kernel residuals and empirical coercivity.
"""

import logging
import warnings
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import LinearOperator, cg, lobpcg

from .errors import NonConvergence, SpectralAnomaly
from .ground_state import radial_interpolant
from .spectral_grid import Field2D
from .util import thread_count, traced


__all__ = [
    'LinearizedSpectrum',
    'CoercivityReport',
    'RadialSpectrum',
    'apply_L',
    'rayleigh_quotient',
    'negative_eigenpair',
    'constrained_minimum',
    'radial_spectrum',
    'decay_rate',
    'coercivity_probe',
    'constraint_set',
    'compute_spectrum',
]


LinearizedSpectrum = namedtuple('LinearizedSpectrum', [
    'lambda0', 'chi0', 'ker_res1', 'ker_res2', 'sigma0_est',
    'eig_residual', 'second_eigenvalue', 'chi0_decay_delta'])

CoercivityReport = namedtuple('CoercivityReport', [
    'sigma0_est', 'chi0_quotient', 'quotients', 'constraints'])

RadialSpectrum = namedtuple('RadialSpectrum', [
    'lambda0', 'second', 'r', 'chi'])


def _potential(gs):
    return gs.p * gs.Q.values**(gs.p - 1)


def _apply(gs, values, potential=None):
    grid = gs.grid
    if potential is None:
        potential = _potential(gs)
    return grid.ifft((1 + grid.ksq) * grid.fft(values)) - potential * values


def apply_L(f, gs):
    """
    Apply L = -Delta + 1 - p Q^(p-1) with the spectral Laplacian.

    :param Field2D f: field on the ground state grid
    :param GroundState gs: ground state
    :rtype: Field2D
    :raises GridMismatch: if f lives on another grid
    """
    gs.grid.check(f)
    return Field2D(gs.grid, _apply(gs, f.values))


def rayleigh_quotient(f, gs):
    """(Lf, f) / (f, f)."""
    grid = gs.grid
    values = getattr(f, 'values', f)
    return grid.inner(_apply(gs, values), values) / grid.inner(values, values)


def _even_part(grid, values):
    values = 0.5 * (values + grid.reflect(values, 1))
    return 0.5 * (values + grid.reflect(values, 2))


def _shifted_solve(gs, potential, mu, rhs):
    """Solve (L - mu) y = rhs by preconditioned CG (L - mu is SPD)."""
    grid = gs.grid
    shape = grid.shape
    symbol = 1 + grid.ksq - mu

    def matvec(v):
        v = v.reshape(shape)
        return (grid.ifft(symbol * grid.fft(v)) - potential * v).ravel()

    def precondition(v):
        return grid.ifft(grid.fft(v.reshape(shape)) / symbol).ravel()

    n = rhs.size
    A = LinearOperator((n, n), matvec=matvec, dtype=float)
    M = LinearOperator((n, n), matvec=precondition, dtype=float)
    y, info = cg(A, rhs.ravel(), M=M, rtol=1e-12, atol=0, maxiter=1000)
    if info > 0:
        logging.debug('cg: no convergence in {} iterations'.format(info))
    return y.reshape(shape)


@traced
def negative_eigenpair(gs, tol=1e-9, max_iter=100):
    """
    Compute the negative eigenvalue -lambda0 and eigenfunction chi0 of L.

    Shifted inverse iteration restricted to functions even in both axes,
    which excludes the translational kernel. The shift is kept below
    -lambda0 with the lower bound ``rho - |r|^2/|rho|`` (the rest of the
    even spectrum is non-negative), so every step is a positive definite
    CG solve.

    :param GroundState gs: ground state
    :param float tol: target for ||L chi0 + lambda0 chi0||_2
    :return: ``(lambda0, chi0)``, chi0 normalized and positive at the origin
    :raises NonConvergence: if the residual does not reach ``tol``
    :raises SpectralAnomaly: if the computed eigenvalue is not negative
    """
    grid = gs.grid
    potential = _potential(gs)
    # one below the lower bound 1 - max V of L
    floor = -potential.max()
    x = gs.Q.values / grid.norm(gs.Q.values)
    Lx = _apply(gs, x, potential)
    rho = grid.inner(Lx, x)
    for iteration in range(max_iter):
        residual = grid.norm(Lx - rho * x)
        logging.debug('inverse iteration {}: rho={:.12f} residual={:.3g}'
                      .format(iteration, rho, residual))
        if residual < tol:
            break
        if rho >= 0:
            raise SpectralAnomaly(
                "Rayleigh quotient {:.3g} is not negative".format(rho))
        mu = max(floor, rho - residual**2 / abs(rho) - 0.1)
        x = _even_part(grid, _shifted_solve(gs, potential, mu, x))
        x /= grid.norm(x)
        Lx = _apply(gs, x, potential)
        rho = grid.inner(Lx, x)
    else:
        raise NonConvergence(
            "eigen residual {:.3g} after {} iterations".format(
                residual, max_iter))
    if x[grid.origin_index()] < 0:
        x = -x
    return -rho, Field2D(grid, x)


def constraint_set(gs, chi0, name='chi0'):
    """
    Constraint vectors for coercivity checks.

    ``chi0``: {chi0, Q_y1, Q_y2}; ``weinstein``: {Q, y1 Q, y2 Q, |y|^2 Q};
    ``q3``: {Q^3, Q_y1, Q_y2}; ``negative``: {chi0}.
    """
    grid = gs.grid
    Q = gs.Q.values
    chi = getattr(chi0, 'values', chi0)
    sets = {
        'chi0': [chi, gs.Qy1.values, gs.Qy2.values],
        'weinstein': [Q, grid.X1 * Q, grid.X2 * Q,
                      (grid.X1**2 + grid.X2**2) * Q],
        'q3': [Q**3, gs.Qy1.values, gs.Qy2.values],
        'negative': [chi],
    }
    try:
        return sets[name]
    except KeyError:
        raise ValueError("Unknown constraint set: {!r}".format(name))


@traced
def constrained_minimum(gs, constraints, maxiter=200, tol=1e-6, seed=0):
    """
    Smallest eigenvalue of L on the orthogonal complement of a set of
    constraint vectors, by preconditioned LOBPCG.
    """
    grid = gs.grid
    shape = grid.shape
    n = grid.N1 * grid.N2
    potential = _potential(gs)

    def matvec(v):
        return _apply(gs, v.reshape(shape), potential).ravel()

    def precondition(v):
        return grid.ifft(grid.fft(v.reshape(shape)) / (1 + grid.ksq)).ravel()

    A = LinearOperator((n, n), matvec=matvec, dtype=float)
    M = LinearOperator((n, n), matvec=precondition, dtype=float)
    Y = np.column_stack([c.ravel() for c in constraints])
    rng = np.random.default_rng(seed)
    envelope = np.exp(-(grid.X1**2 + grid.X2**2) / 8).ravel()
    X = rng.standard_normal((n, 2)) * envelope[:, None]
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', UserWarning)
        values, _ = lobpcg(A, X, M=M, Y=Y, tol=tol, maxiter=maxiter,
                           largest=False)
    return float(np.min(values))


def _radial_eigs(Qr, p, h, R, count):
    n = int(round(R / h))
    r = (np.arange(n) + 0.5) * h
    rp = r + h / 2
    rm = r - h / 2
    diag = (rp + rm) / (r * h**2) + 1 - p * Qr(r)**(p - 1)
    off = -rp[:-1] / (h**2 * np.sqrt(r[:-1] * r[1:]))
    w, v = eigh_tridiagonal(diag, off, select='i',
                            select_range=(0, count - 1))
    chi = v[:, 0] / np.sqrt(r)
    chi /= np.sqrt(np.sum(chi**2 * 2 * np.pi * r * h))
    return w, r, np.abs(chi)


def radial_spectrum(profile, h=0.01, R=30.0):
    """
    Two lowest radial eigenvalues of L from a cell-centred finite
    difference discretization, Richardson-extrapolated in h.

    :rtype: RadialSpectrum
    """
    Qr = radial_interpolant(profile)
    w_h, _, _ = _radial_eigs(Qr, profile.p, h, R, 2)
    w_h2, r, chi = _radial_eigs(Qr, profile.p, h / 2, R, 2)
    w = (4 * w_h2 - w_h) / 3
    return RadialSpectrum(-w[0], w[1], r, chi)


def decay_rate(f, r_min=4.0, r_max=10.0):
    """
    Exponential decay rate along the positive x1 axis, fitted to
    ``log(f sqrt(r))`` (the K0 tail shape) on [r_min, r_max].
    """
    grid = f.grid
    i0, j0 = grid.origin_index()
    r = grid.x1[i0:]
    values = np.abs(f.values[i0:, j0])
    r_max = min(r_max, 0.6 * grid.L1)
    keep = (r >= r_min) & (r <= r_max) & (values > 1e-13)
    slope = np.polyfit(r[keep], np.log(values[keep] * np.sqrt(r[keep])), 1)[0]
    return -slope


def _random_field(grid, rng):
    spectrum = np.zeros(grid.spectral_shape, dtype=complex)
    kc = rng.uniform(0.5, 3.0)
    band = (np.abs(grid.K1) <= kc) & (grid.K2 <= kc)
    count = int(band.sum())
    spectrum[band] = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    values = grid.ifft(spectrum)
    center = rng.uniform(-2, 2, size=2)
    width = rng.uniform(1, 4)
    envelope = np.exp(-((grid.X1 - center[0])**2 + (grid.X2 - center[1])**2)
                      / (2 * width**2))
    return values * envelope


def _projector(grid, vectors):
    gram = np.array([[grid.inner(a, b) for b in vectors] for a in vectors])

    def project(f):
        coef = np.linalg.solve(gram, [grid.inner(v, f) for v in vectors])
        return f - sum(c * v for c, v in zip(coef, vectors))
    return project


@traced
def coercivity_probe(gs, spec, n_samples=1000, rng_seed=42,
                     constraints='chi0', workers=None):
    """
    Empirical coercivity of L on the orthogonal complement of a constraint
    set: the minimum Rayleigh quotient over random smooth projected fields.

    Each sample draws from its own child of ``SeedSequence(rng_seed)``, so
    the result does not depend on scheduling.

    :param GroundState gs: ground state
    :param spec: object with a ``chi0`` field (LinearizedSpectrum or pair)
    :param int n_samples: number of samples, >= 100
    :param int rng_seed: root seed
    :param str constraints: 'chi0', 'weinstein' or 'q3'
    :rtype: CoercivityReport
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100, got {}".format(n_samples))
    grid = gs.grid
    chi0 = spec.chi0
    project = _projector(grid, constraint_set(gs, chi0, constraints))
    potential = _potential(gs)

    def sample(seed_seq):
        f = project(_random_field(grid, np.random.default_rng(seed_seq)))
        return grid.inner(_apply(gs, f, potential), f) / grid.inner(f, f)

    seeds = np.random.SeedSequence(rng_seed).spawn(n_samples)
    with ThreadPoolExecutor(max_workers=workers or thread_count()) as pool:
        quotients = np.array(list(pool.map(sample, seeds)))
    report = CoercivityReport(
        sigma0_est=float(quotients.min()),
        chi0_quotient=rayleigh_quotient(chi0, gs),
        quotients=quotients,
        constraints=constraints,
    )
    if report.sigma0_est <= 0:
        logging.warning('coercivity ({}): non-positive minimum {:.3g}'
                        .format(constraints, report.sigma0_est))
    return report


@traced
def compute_spectrum(gs, tol=1e-9, n_samples=1000, rng_seed=42,
                     anomaly_tol=1e-6):
    """
    Full linearized spectrum record: eigenpair, kernel residuals, the
    anomaly check for a second negative eigenvalue and the empirical
    coercivity estimate.

    :raises SpectralAnomaly: if L has a second negative eigenvalue
    """
    lambda0, chi0 = negative_eigenpair(gs, tol=tol)
    grid = gs.grid
    second = constrained_minimum(gs, constraint_set(gs, chi0, 'negative'))
    logging.info('lambda0 = {:.10f}, next eigenvalue {:.3g}'.format(
        lambda0, second))
    if second < -anomaly_tol * lambda0:
        raise SpectralAnomaly(
            "second negative eigenvalue {:.6g} detected".format(second))
    pair = LinearizedSpectrum(lambda0, chi0, None, None, None, None, None,
                              None)
    coercivity = coercivity_probe(gs, pair, n_samples, rng_seed)
    return LinearizedSpectrum(
        lambda0=lambda0,
        chi0=chi0,
        ker_res1=grid.norm(_apply(gs, gs.Qy1.values)),
        ker_res2=grid.norm(_apply(gs, gs.Qy2.values)),
        sigma0_est=coercivity.sigma0_est,
        eig_residual=grid.norm(_apply(gs, chi0.values) + lambda0 * chi0.values),
        second_eigenvalue=second,
        chi0_decay_delta=decay_rate(chi0),
    )
