"""
Ground state Q of -Delta Q + Q - Q^p = 0 (p = 3 throughout the lab) and the
static objects derived from it.

Two independent solvers are provided: radial shooting on the ODE
``Q'' + Q'/r - Q + Q^p = 0`` (the oracle) and Petviashvili iteration on
the periodic grid, seeded by the radial profile.
"""

import logging
from collections import namedtuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp, simpson
from scipy.interpolate import CubicHermiteSpline
from scipy.special import i0, i1, k0, k1

from .errors import DomainError, GridTooSmall, NonConvergence
from .spectral_grid import Field2D
from .util import traced


__all__ = [
    'RadialProfile',
    'GroundState',
    'solve_radial_Q',
    'radial_interpolant',
    'radial_mass',
    'solve_Q_2d',
    'build_ground_state',
    'compute_F',
    'compute_kappa',
    'kappa_radial',
    'scaling_generator',
    'ground_state_report',
]


RadialProfile = namedtuple('RadialProfile', [
    'r', 'q', 'qprime', 'Q0', 'residual', 'p'])


class GroundState(namedtuple('GroundState', [
        'grid', 'p', 'Q', 'LamQ', 'Qy1', 'Qy2', 'F', 'kappa',
        'mass', 'l4', 'grad2', 'residual', 'f_truncation'])):

    """Ground state on a grid plus its derived fields and norms."""

    __slots__ = ()

    @property
    def peak(self):
        return float(self.Q.values.max())

    @property
    def energy(self):
        """E[Q] = 1/2 |grad Q|^2 - 1/4 |Q|_4^4 (vanishes for p = 3)."""
        return 0.5 * self.grad2 - 0.25 * self.l4

    @property
    def pohozaev(self):
        """Relative defect of 2 |grad Q|^2 = |Q|_4^4."""
        return (2 * self.grad2 - self.l4) / self.l4


# Shooting

_R0 = 1e-6          # start radius, avoids the 1/r singularity
_R_END = 40.0       # integration range of a single shot
_R_MAX = 60.0       # extent of the stored profile
_DR = 0.005


def _power(q, p):
    return q * np.abs(q)**(p - 1)


def _shoot(Q0, p, rtol):
    c = Q0 - Q0**p
    y0 = [Q0 + c * _R0**2 / 4, c * _R0 / 2]

    def rhs(r, y):
        q, dq = y
        return [dq, -dq / r + q - _power(q, p)]

    def crossing(r, y):
        return y[0]
    crossing.terminal = True
    crossing.direction = -1

    def turning(r, y):
        return y[1]
    turning.terminal = True
    turning.direction = 1

    sol = solve_ivp(rhs, (_R0, _R_END), y0, method='DOP853',
                    rtol=rtol, atol=rtol * 1e-3,
                    events=[crossing, turning], dense_output=True)
    if sol.t_events[0].size:
        return 'over', sol
    return 'under', sol


def _match_radius(lo, hi):
    """Largest radius up to which both brackets agree to 1e-10."""
    r_end = min(lo.t[-1], hi.t[-1])
    r = np.linspace(1.0, r_end, 2000)
    q_lo = lo.sol(r)[0]
    q_hi = hi.sol(r)[0]
    bad = np.abs(q_lo - q_hi) > 1e-10
    r_bad = r[np.argmax(bad)] if bad.any() else r_end
    return min(r_bad - 0.5, 14.0)


def _tail_coefficient(r, q, dq):
    """Coefficient of K0 in q = a K0 + b I0 (the growing part is dropped)."""
    return r * (q * i1(r) - dq * i0(r))


def _integral_residual(evaluate, p, r_stop=15.0, panel=0.25):
    """
    Residual of the integrated radial equation
    ``r Q'(r) = int_0^r s (Q - Q^p) ds`` at panel ends on [0, r_stop].
    """
    nodes, weights = leggauss(12)
    edges = np.arange(0, r_stop + panel / 2, panel)
    total = 0.0
    worst = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        s = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        q, _ = evaluate(s)
        total += 0.5 * (b - a) * np.sum(weights * s * (q - _power(q, p)))
        _, dq = evaluate(np.array([b]))
        worst = max(worst, abs(b * dq[0] - total))
    return worst


@traced
def solve_radial_Q(tol=1e-10, p=3):
    """
    Solve for the radial ground state by shooting on Q(0).

    Bisection separates initial values whose solutions cross zero
    (overshoot) from those that turn back up (undershoot). The converged
    solution is continued past the last reliable radius by its linear
    tail ``a K0(r)``.

    :param float tol: residual tolerance, in (1e-14, 1e-4)
    :param int p: nonlinearity power
    :return: profile sampled on [0, 60] with spacing 0.005
    :rtype: RadialProfile
    :raises NonConvergence: if the bisection collapses without meeting the
                            residual tolerance
    """
    if not 1e-14 < tol < 1e-4:
        raise DomainError("tol must lie in (1e-14, 1e-4), got {}".format(tol))
    rtol = max(tol * 1e-2, 3e-14)
    lo, hi = 1.5, 4.0
    kind_lo, sol_lo = _shoot(lo, p, rtol)
    kind_hi, sol_hi = _shoot(hi, p, rtol)
    if kind_lo != 'under' or kind_hi != 'over':
        raise NonConvergence("shooting bracket [{}, {}] is invalid".format(
            lo, hi))
    for iteration in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo < 4 * np.finfo(float).eps * hi:
            break
        kind, sol = _shoot(mid, p, rtol)
        if kind == 'under':
            lo, sol_lo = mid, sol
        else:
            hi, sol_hi = mid, sol
    logging.debug('shooting: Q(0) in [{!r}, {!r}] after {} bisections'
                  .format(lo, hi, iteration))

    r_match = _match_radius(sol_lo, sol_hi)
    if r_match < 8.0:
        raise NonConvergence(
            "shooting solution only reliable up to r = {:.2f}".format(r_match))
    q_m, dq_m = sol_lo.sol(r_match)
    a = _tail_coefficient(r_match, q_m, dq_m)

    def evaluate(r):
        r = np.asarray(r, dtype=float)
        q = np.empty_like(r)
        dq = np.empty_like(r)
        inner = r <= r_match
        if inner.any():
            core = np.maximum(r[inner], _R0)
            q[inner], dq[inner] = sol_lo.sol(core)
        q[inner & (r < _R0)] = lo
        dq[inner & (r < _R0)] = 0
        q[~inner] = a * k0(r[~inner])
        dq[~inner] = -a * k1(r[~inner])
        return q, dq

    r = np.arange(0, _R_MAX + _DR / 2, _DR)
    q, dq = evaluate(r)
    residual = _integral_residual(evaluate, p)
    logging.debug('radial profile: Q(0)={:.12f}, match radius {:.2f}, '
                  'residual {:.3g}'.format(lo, r_match, residual))
    if residual > tol:
        raise NonConvergence("radial residual {:.3g} exceeds {:.3g}".format(
            residual, tol))
    return RadialProfile(r, q, dq, lo, residual, p)


def radial_interpolant(profile):
    """Piecewise cubic Hermite interpolant ``r -> Q(r)``; zero beyond r_max."""
    spline = CubicHermiteSpline(profile.r, profile.q, profile.qprime,
                                extrapolate=False)

    def Q(r):
        return np.nan_to_num(spline(np.asarray(r, dtype=float)), nan=0.0)
    Q.derivative = spline.derivative()
    return Q


def radial_mass(profile):
    """int_0^inf Q(r)^2 2 pi r dr by Simpson's rule."""
    return simpson(profile.q**2 * 2 * np.pi * profile.r, x=profile.r)


# Petviashvili

def scaling_generator(grid, values, p=3):
    """Lambda f = (2/(p-1)) f + y . grad f."""
    f1, f2 = grid.gradient(values)
    return 2 / (p - 1) * values + grid.X1 * f1 + grid.X2 * f2


def _symmetrize(grid, q):
    q = 0.5 * (q + grid.reflect(q, 1))
    return 0.5 * (q + grid.reflect(q, 2))


@traced
def solve_Q_2d(grid, seed, tol=1e-10, max_iter=500):
    """
    Solve the ground state equation on the grid by Petviashvili iteration.

    :param Grid grid: periodic grid
    :param RadialProfile seed: radial profile used as initial guess
    :param float tol: sup-norm residual tolerance
    :param int max_iter: iteration cap
    :rtype: GroundState
    :raises GridTooSmall: if the seed exceeds 1e-10 Q(0) on the boundary
    :raises NonConvergence: if the stabilizing factor does not settle
    """
    p = seed.p
    gamma = p / (p - 1)
    Qr = radial_interpolant(seed)
    q = Qr(np.hypot(grid.X1, grid.X2))
    edge = max(np.abs(q[0, :]).max(), np.abs(q[:, 0]).max())
    if edge > 1e-10 * seed.Q0:
        raise GridTooSmall(
            "Q = {:.3g} on the boundary of {}; enlarge L1, L2".format(
                edge, grid))

    symbol = 1 + grid.ksq
    for iteration in range(max_iter):
        qh = grid.fft(q)
        nonlinear = _power(q, p)
        residual = np.abs(grid.ifft(symbol * qh) - nonlinear).max()
        factor = grid.spectral_energy(qh, symbol) / grid.inner(nonlinear, q)
        logging.debug('petviashvili {}: factor-1={:.3g} residual={:.3g}'
                      .format(iteration, factor - 1, residual))
        if residual < tol:
            break
        q = grid.ifft(factor**gamma * grid.fft(nonlinear) / symbol)
    else:
        raise NonConvergence(
            "Petviashvili: residual {:.3g}, factor-1 {:.3g} after {} "
            "iterations".format(residual, factor - 1, max_iter))

    return build_ground_state(Field2D(grid, _symmetrize(grid, q)), p,
                              float(residual))


def build_ground_state(Q, p=3, residual=None):
    """
    Derived fields and norms of a ground state field.

    :param Field2D Q: ground state on its grid
    :param int p: nonlinearity power
    :param float residual: sup residual of the solve; recomputed if None
    :rtype: GroundState
    """
    grid = Q.grid
    q = Q.values
    if residual is None:
        residual = np.abs(grid.ifft((1 + grid.ksq) * grid.fft(q))
                          - _power(q, p)).max()
    qy1, qy2 = grid.gradient(q)
    lam_q = Field2D(grid, scaling_generator(grid, q, p))
    Qy2 = Field2D(grid, qy2)
    return GroundState(
        grid=grid,
        p=p,
        Q=Q,
        LamQ=lam_q,
        Qy1=Field2D(grid, qy1),
        Qy2=Qy2,
        F=compute_F(lam_q),
        kappa=compute_kappa(Qy2),
        mass=grid.integrate(q**2),
        l4=grid.integrate(q**4),
        grad2=grid.integrate(qy1**2 + qy2**2),
        residual=float(residual),
        f_truncation=float(np.abs(lam_q.values[0, :]).max()),
    )


def compute_F(LamQ):
    """
    F(y1, y2) = int_{-L1}^{y1} Lambda Q(z, y2) dz.

    The y1-mean of the integrand is integrated exactly and the periodic
    remainder spectrally, so F vanishes at the left edge and its value at
    the right edge equals the rectangle-rule integral over the period.

    :param Field2D LamQ: Lambda Q
    :rtype: Field2D
    """
    grid = LamQ.grid
    g = LamQ.values
    mean = g.mean(axis=0)
    k = grid.K1
    with np.errstate(divide='ignore', invalid='ignore'):
        inverse = np.where(k == 0, 0, 1 / (1j * k))
    inverse[grid.N1 // 2] = 0
    G = grid.ifft(inverse * grid.fft(g - mean))
    F = G - G[0, :] + mean * (grid.X1 + grid.L1)
    return Field2D(grid, F)


def compute_kappa(Qy2):
    """kappa = 1/2 int y2^2 (int Q_y2 dy1)^2 dy2 on the grid."""
    grid = Qy2.grid
    inner = grid.dx1 * Qy2.values.sum(axis=0)
    return 0.5 * grid.dx2 * float(np.sum(grid.x2**2 * inner**2))


def kappa_radial(profile, h=0.05, extent=40.0):
    """
    Independent value of kappa from the radial profile, using
    ``int Q_y2 dy1 = int Q'(r) y2/r dy1`` on a fine tensor grid.
    """
    Qr = radial_interpolant(profile)
    y = np.arange(-extent, extent + h / 2, h)
    Y1, Y2 = np.meshgrid(y, y[y >= 0], indexing='ij')
    r = np.hypot(Y1, Y2)
    with np.errstate(divide='ignore', invalid='ignore'):
        direction = np.where(r > 0, Y2 / r, 0.0)
    inner = h * np.sum(Qr.derivative(r) * direction, axis=0)
    inner = np.nan_to_num(inner)
    y2 = y[y >= 0]
    weights = np.full(y2.size, h)
    weights[0] = h / 2
    # even integrand: twice the half line
    return float(np.sum(weights * y2**2 * inner**2))


def ground_state_report(gs, profile=None):
    """Scalar summary of a ground state as a JSON-ready dict."""
    report = {
        'Q0': gs.peak,
        'mass': gs.mass,
        'l4': gs.l4,
        'grad2': gs.grad2,
        'energy': gs.energy,
        'pohozaev': gs.pohozaev,
        'kappa': gs.kappa,
        'residual': gs.residual,
        'f_truncation': gs.f_truncation,
    }
    if profile is not None:
        Qr = radial_interpolant(profile)
        grid = gs.grid
        report['radial_Q0'] = profile.Q0
        report['radial_mass'] = radial_mass(profile)
        report['radial_sup_error'] = float(np.abs(
            gs.Q.values - Qr(np.hypot(grid.X1, grid.X2))).max())
    return report
