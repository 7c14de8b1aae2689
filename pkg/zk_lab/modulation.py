"""
Modulation decomposition u(t) = lambda^-1 (Q + eps)((. - x(t)) / lambda).

The parameters are fixed by the orthogonality conditions
``<eps, chi0> = <eps, Q_y1> = <eps, Q_y2> = 0``. For data even in x2 the
last condition holds by parity and x2 stays at 0; the three-parameter
variant solves for x2 as well.
"""

import logging
from collections import namedtuple

import numpy as np
import scipy.fft
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize_scalar

from .errors import (
    DegenerateSystem, NewtonDiverged, NoPeak, ParityViolation)
from .linearized import _apply
from .spectral_grid import Field2D, SpectralInterpolant
from .util import traced


__all__ = [
    'ModulationState',
    'RateEstimate',
    'Modulation',
    'initial_guess',
    'decompose',
    'parameter_rates',
    'eps_rhs',
    'tube_distance',
    'mass_relation',
    'energy_of',
    'energy_linearization',
    'rescaled_time',
    'control_constant',
]


ModulationState = namedtuple('ModulationState', [
    'lam', 'x1', 'eps', 'ortho_res', 'eps_h1', 'eps_l2', 'x2', 'iterations'])

RateEstimate = namedtuple('RateEstimate', [
    'lam_rate', 'x_rate', 'bound_rhs', 'control_ratio', 'det'])


_LAMBDA_RANGE = (0.2, 5.0)
_NORM_FLOOR = 1e-4


class Modulation(object):

    """
    Projection machinery around a ground state and its negative
    eigenfunction. Builds the constraint fields and the fixed integrals of
    the rate equations once.

    :param GroundState gs: ground state
    :param spec: object with ``lambda0`` and ``chi0``
    """

    def __init__(self, gs, spec):
        grid = gs.grid
        self.gs = gs
        self.grid = grid
        self.lambda0 = spec.lambda0
        Q = gs.Q.values
        chi = spec.chi0.values
        self.Q = Q
        self.chi0 = chi
        self.Qy1 = gs.Qy1.values
        self.Qy2 = gs.Qy2.values
        self.Qy1y1 = grid.diff(Q, 1, 2)
        self.chi0_y1 = grid.diff(chi, 1)
        self.L_chi0_y1 = _apply(gs, self.chi0_y1)
        self.y_grad_Qy1 = _y_grad(grid, self.Qy1)
        self.y_grad_chi0 = _y_grad(grid, chi)
        self.constraint_norms = np.array([
            grid.norm(chi), grid.norm(self.Qy1), grid.norm(self.Qy2)])
        self.Qy1_sq = grid.inner(self.Qy1, self.Qy1)
        self.chi0_Q = grid.inner(chi, Q)
        self.det_floor = abs(self.chi0_Q) * self.Qy1_sq / self.lambda0

    # decomposition

    def initial_guess(self, u):
        return initial_guess(u, self.gs)

    def _evaluate(self, interp, lam, x1, x2):
        grid = self.grid
        E1, E2 = interp.matrices(lam * grid.x1 + x1, lam * grid.x2 + x2)
        F = interp.spectrum
        FE = F @ E2.T
        FE2 = F @ (E2 * (1j * interp.k2)).T
        E1d = E1 * (1j * interp.k1)
        w = (E1 @ FE).real
        w1 = (E1d @ FE).real
        w2 = (E1 @ FE2).real
        eps = lam * w - self.Q
        d_lam = w + lam * (grid.X1 * w1 + grid.X2 * w2)
        return eps, d_lam, lam * w1, lam * w2

    def _constraints(self, full):
        if full:
            return [self.chi0, self.Qy1, self.Qy2]
        return [self.chi0, self.Qy1]

    @traced
    def decompose(self, u, seed=None, tol=1e-9, max_iter=50, full=False):
        """
        Solve the orthogonality conditions for (lambda, x1[, x2]) by damped
        Newton iteration with the analytic Jacobian
        ``d eps/d lambda = Lambda v / lambda``, ``d eps/d x = grad v``.

        :param Field2D u: state on the ground state grid
        :param seed: ``(lambda, x1)`` start; from :meth:`initial_guess`
                     when omitted
        :param float tol: relative residual target
        :param bool full: also solve for x2 (third constraint)
        :rtype: ModulationState
        :raises ParityViolation: if u is not even in x2 and ``full`` is off
        :raises NewtonDiverged: if the iteration leaves its basin
        """
        grid = self.grid
        grid.check(u)
        if not full:
            mirror = np.abs(u.values - grid.reflect(u.values, 2)).max()
            if mirror > 1e-8 * np.abs(u.values).max():
                raise ParityViolation(
                    "u is not even in x2 (defect {:.3g})".format(mirror))
        if seed is None:
            seed = self.initial_guess(u)
        interp = SpectralInterpolant(u)
        constraints = self._constraints(full)
        norms = self.constraint_norms[:len(constraints)]
        params = np.array([seed[0], seed[1], 0.0][:len(constraints)], float)

        def evaluate(params):
            x2 = params[2] if full else 0.0
            eps, *derivs = self._evaluate(interp, params[0], params[1], x2)
            G = np.array([grid.inner(eps, c) for c in constraints])
            return eps, derivs[:len(constraints)], G

        eps, derivs, G = evaluate(params)
        for iteration in range(max_iter):
            scale = tol * (grid.norm(eps) + _NORM_FLOOR) * norms
            logging.debug('newton {}: lambda={:.12f} x1={:.12f} |G|={:.3g}'
                          .format(iteration, params[0], params[1],
                                  np.abs(G).max()))
            if np.all(np.abs(G) <= scale):
                break
            J = np.array([[grid.inner(d, c) for d in derivs]
                          for c in constraints])
            try:
                delta = np.linalg.solve(J, -G)
            except np.linalg.LinAlgError:
                raise NewtonDiverged("singular modulation Jacobian")
            if np.abs(delta).max() < 1e-14 * (1 + np.abs(params).max()):
                if np.abs(G).max() <= 1e-10 * norms.max():
                    break
            t = 1.0
            while t >= 1/64:
                trial = params + t * delta
                if _LAMBDA_RANGE[0] < trial[0] < _LAMBDA_RANGE[1]:
                    eps_t, derivs_t, G_t = evaluate(trial)
                    if np.abs(G_t).sum() < np.abs(G).sum():
                        break
                t /= 2
            else:
                raise NewtonDiverged(
                    "no descent from lambda={:.6g}, x1={:.6g} (|G|={:.3g})"
                    .format(params[0], params[1], np.abs(G).max()))
            params, eps, derivs, G = trial, eps_t, derivs_t, G_t
        else:
            raise NewtonDiverged(
                "no convergence in {} iterations (|G|={:.3g})".format(
                    max_iter, np.abs(G).max()))

        field = Field2D(grid, eps)
        ortho = [grid.inner(eps, c) for c in
                 (self.chi0, self.Qy1, self.Qy2)]
        return ModulationState(
            lam=float(params[0]),
            x1=float(params[1]),
            eps=field,
            ortho_res=tuple(ortho),
            eps_h1=field.h1(),
            eps_l2=field.l2(),
            x2=float(params[2]) if full else 0.0,
            iterations=iteration,
        )

    # rates

    def rate_system(self, eps):
        """Matrix and right side of the two rate equations."""
        grid = self.grid
        e = eps.values
        inner = grid.inner
        A = np.array([
            [-inner(self.y_grad_Qy1, e),
             self.Qy1_sq - inner(self.Qy1y1, e)],
            [2 / self.lambda0 * self.chi0_Q - inner(self.y_grad_chi0, e),
             -inner(self.chi0_y1, e)],
        ])
        b = np.array([
            6 * inner(self.Q * self.Qy1**2, e)
            - 3 * inner(self.Qy1y1 * self.Q, e**2)
            - inner(self.Qy1y1, e**3),
            inner(self.L_chi0_y1, e)
            - 3 * inner(self.chi0_y1 * self.Q, e**2)
            - inner(self.chi0_y1, e**3),
        ])
        return A, b

    def rates(self, ms):
        """
        Solve the rate equations for (lambda_s/lambda, x_s/lambda - 1).

        :raises DegenerateSystem: if the determinant is below
            ``(1/lambda0) |int chi0 Q| int Q_y1^2``
        """
        A, b = self.rate_system(ms.eps)
        det = float(np.linalg.det(A))
        if abs(det) < self.det_floor:
            raise DegenerateSystem(
                "rate determinant {:.3g} below {:.3g}".format(
                    det, self.det_floor))
        lam_rate, x_rate = np.linalg.solve(A, b)
        norm = ms.eps_l2
        return RateEstimate(
            lam_rate=float(lam_rate),
            x_rate=float(x_rate),
            bound_rhs=norm,
            control_ratio=(abs(lam_rate) + abs(x_rate)) / norm if norm else 0.0,
            det=det,
        )

    def eps_rhs(self, ms, rates):
        """
        Right side of the eps equation:
        ``(L eps)_y1 + r_lam (Lambda Q + Lambda eps) + r_x (Q_y1 + eps_y1)
        - 3 (Q eps^2)_y1 - (eps^3)_y1``.
        """
        grid = self.grid
        e = ms.eps.values
        lam_eps = e + _y_grad(grid, e)
        rhs = grid.diff(_apply(self.gs, e) - 3 * self.Q * e**2 - e**3, 1)
        rhs += rates.lam_rate * (self.gs.LamQ.values + lam_eps)
        rhs += rates.x_rate * (self.Qy1 + grid.diff(e, 1))
        return Field2D(grid, rhs)


def _y_grad(grid, values):
    f1, f2 = grid.gradient(values)
    return grid.X1 * f1 + grid.X2 * f2


def initial_guess(u, gs):
    """
    Seed (lambda, x1) from the peak height and the cross-correlation
    of the x2 = 0 slices of u and Q along x1.

    :raises NoPeak: if max u < 0.1 Q(0)
    """
    grid = gs.grid
    grid.check(u)
    peak = gs.peak
    top = float(u.values.max())
    if top < 0.1 * peak:
        raise NoPeak("max u = {:.3g} < 0.1 Q(0)".format(top))
    j0 = grid.N2 // 2
    row = u.values[:, j0]
    ref = gs.Q.values[:, j0]
    corr = scipy.fft.irfft(
        scipy.fft.rfft(row) * np.conj(scipy.fft.rfft(ref)), n=grid.N1)
    m = int(np.argmax(corr))
    c_prev, c_mid, c_next = corr[m - 1], corr[m], corr[(m + 1) % grid.N1]
    curvature = c_prev - 2 * c_mid + c_next
    delta = 0.5 * (c_prev - c_next) / curvature if curvature else 0.0
    shift = m + delta
    if shift > grid.N1 / 2:
        shift -= grid.N1
    return peak / top, shift * grid.dx1


def decompose(u, gs, spec, seed=None, tol=1e-9, full=False):
    """Functional form of :meth:`Modulation.decompose`."""
    return Modulation(gs, spec).decompose(u, seed, tol, full=full)


def parameter_rates(ms, gs, spec):
    """Functional form of :meth:`Modulation.rates`."""
    return Modulation(gs, spec).rates(ms)


def eps_rhs(ms, rates, gs, spec):
    """Functional form of :meth:`Modulation.eps_rhs`."""
    return Modulation(gs, spec).eps_rhs(ms, rates)


def tube_distance(u, gs, x1_hint=0.0, window=3.0):
    """
    inf over x1 of ||u - Q(. - x1)||_H1 (x2 fixed at 0 by parity), by a
    scan on [x1_hint - window, x1_hint + window] refined with a bounded
    scalar minimisation.

    :return: ``(distance, x1)``
    """
    grid = gs.grid
    grid.check(u)
    uh = grid.fft(u.values)
    qh = grid.fft(gs.Q.values)
    weight = 1 + grid.ksq
    k1 = grid.K1

    def distance(x):
        return np.sqrt(grid.spectral_energy(
            uh - qh * np.exp(-1j * k1 * x), weight))

    scan = np.arange(x1_hint - window, x1_hint + window + 1e-9, 0.1)
    values = [distance(x) for x in scan]
    best = scan[int(np.argmin(values))]
    result = minimize_scalar(distance, bounds=(best - 0.1, best + 0.1),
                             method='bounded', options={'xatol': 1e-8})
    return float(result.fun), float(result.x)


def mass_relation(eps, gs):
    """2 int Q eps + int eps^2 (constant M0 along the flow)."""
    grid = gs.grid
    e = eps.values
    return 2 * grid.inner(gs.Q.values, e) + grid.inner(e, e)


def energy_of(eps, gs):
    """E[Q + eps]."""
    grid = gs.grid
    w = gs.Q.values + eps.values
    grad2 = grid.spectral_energy(grid.fft(w), grid.ksq)
    return 0.5 * grad2 - 0.25 * grid.integrate(w**4)


def energy_linearization(eps, gs):
    """
    Cubic remainder of the energy expansion,
    ``E[Q+eps] + (int Q eps + 1/2 int eps^2) - 1/2 (L eps, eps)``,
    and the constant c0 = |remainder| / (|grad eps|_2 |eps|_2^2).

    :return: ``(remainder, c0)``
    """
    grid = gs.grid
    e = eps.values
    remainder = (energy_of(eps, gs) + grid.inner(gs.Q.values, e)
                 + 0.5 * grid.inner(e, e) - 0.5 * grid.inner(_apply(gs, e), e))
    grad = np.sqrt(grid.spectral_energy(grid.fft(e), grid.ksq))
    l2sq = grid.inner(e, e)
    c0 = abs(remainder) / (grad * l2sq) if grad * l2sq > 0 else 0.0
    return remainder, c0


def rescaled_time(t, lam):
    """s(t) = int_0^t lambda^-3 dt' by the cumulative trapezoid rule."""
    return cumulative_trapezoid(np.asarray(lam)**-3, np.asarray(t), initial=0)


def control_constant(eps_h1, eps0_h1, eps0_Q, alpha):
    """
    Smallest C5 with ``|eps(s)|_H1^2 <= C5 (alpha |int eps0 Q|
    + |eps0|_H1^2)`` along a series.
    """
    return float(np.max(np.asarray(eps_h1)**2)
                 / (alpha * abs(eps0_Q) + eps0_h1**2))
