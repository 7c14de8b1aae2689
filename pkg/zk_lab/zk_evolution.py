"""
Time integration of u_t + d/dx1 (Delta u + u^3) = 0 on the periodic grid.

In Fourier variables the equation reads ``v_t = i k1 |k|^2 v - i k1 F(u^3)``.
The linear part is advanced exactly; the default integrator is ETDRK4
with its phi-function coefficients evaluated by contour averages.
"""

import functools
import logging
from collections import namedtuple

import numpy as np

from .errors import NaNDetected, check_finite
from .spectral_grid import Field2D
from .util import enum_value, make_enum, traced


__all__ = [
    'Integrator',
    'EvolutionConfig',
    'Trajectory',
    'mass',
    'energy',
    'step',
    'evolve',
    'check_step',
    'conservation_drift',
]


Integrator = make_enum('Integrator', ['ETDRK4', 'IMEX_CN'])


_EvolutionConfig = namedtuple('EvolutionConfig', [
    'dt', 'T', 'integrator', 'dealias', 'snapshot_stride', 'nonlinear',
    'recenter', 'tol_mass', 'tol_energy', 'keep_snapshots'])


class EvolutionConfig(_EvolutionConfig):

    """Time stepping controls; validated on construction."""

    __slots__ = ()

    def __new__(cls, dt, T, integrator='ETDRK4', dealias=True,
                snapshot_stride=1, nonlinear=True, recenter=False,
                tol_mass=1e-8, tol_energy=1e-6, keep_snapshots=True):
        dt, T = float(dt), float(T)
        if not dt > 0:
            raise ValueError("dt must be positive, got {}".format(dt))
        if T < dt:
            raise ValueError("T must be >= dt, got T={} dt={}".format(T, dt))
        if int(snapshot_stride) < 1:
            raise ValueError("snapshot_stride must be >= 1")
        return super(EvolutionConfig, cls).__new__(
            cls, dt, T, enum_value(Integrator, integrator), bool(dealias),
            int(snapshot_stride), bool(nonlinear), bool(recenter),
            float(tol_mass), float(tol_energy), bool(keep_snapshots))

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))


Trajectory = namedtuple('Trajectory', [
    'times', 'snapshots', 'mass', 'energy', 'offsets', 'observations'])


def mass(u):
    """M[u] = int u^2."""
    return u.grid.integrate(u.values**2)


def energy(u):
    """E[u] = 1/2 int |grad u|^2 - 1/4 int u^4."""
    grid = u.grid
    grad2 = grid.spectral_energy(grid.fft(u.values), grid.ksq)
    return 0.5 * grad2 - 0.25 * grid.integrate(u.values**4)


def _symbol(grid):
    # i k1 |k|^2, zero on the k1 Nyquist row
    return grid.multiplier(1, 1) * grid.ksq


def _contour_mean(z, func, points=32, rows=64):
    """Mean of func over circles of radius 1 around each entry of z."""
    roots = np.exp(1j * np.pi * (np.arange(points) + 0.5) / points * 2)
    out = np.empty(z.shape, dtype=complex)
    for start in range(0, z.shape[0], rows):
        block = z[start:start + rows, :, None] + roots
        out[start:start + rows] = func(block).mean(axis=-1)
    return out


@functools.lru_cache(maxsize=8)
def _etdrk4_coefficients(grid, dt):
    hL = dt * _symbol(grid)
    E = np.exp(hL)
    E2 = np.exp(hL / 2)
    Q = dt * _contour_mean(hL, lambda z: (np.exp(z / 2) - 1) / z)
    f1 = dt * _contour_mean(
        hL, lambda z: (-4 - z + np.exp(z) * (4 - 3*z + z**2)) / z**3)
    f2 = dt * _contour_mean(
        hL, lambda z: (2 + z + np.exp(z) * (z - 2)) / z**3)
    f3 = dt * _contour_mean(
        hL, lambda z: (-4 - 3*z - z**2 + np.exp(z) * (4 - z)) / z**3)
    return E, E2, Q, f1, f2, f3


def _nonlinear_term(grid, cfg):
    k1 = -grid.multiplier(1, 1)
    if not cfg.nonlinear:
        return lambda v: 0
    if cfg.dealias:
        def N(v):
            return grid.dealias(k1 * grid.fft(grid.ifft(v)**3))
    else:
        def N(v):
            return k1 * grid.fft(grid.ifft(v)**3)
    return N


def _etdrk4(grid, v, cfg):
    E, E2, Q, f1, f2, f3 = _etdrk4_coefficients(grid, cfg.dt)
    N = _nonlinear_term(grid, cfg)
    Nv = N(v)
    a = E2 * v + Q * Nv
    Na = N(a)
    b = E2 * v + Q * Na
    Nb = N(b)
    c = E2 * a + Q * (2 * Nb - Nv)
    Nc = N(c)
    return E * v + Nv * f1 + 2 * (Na + Nb) * f2 + Nc * f3


def _imex_cn(grid, v, cfg):
    # Crank-Nicolson on the linear part, Heun predictor-corrector on the
    # cubic term
    half = 0.5 * cfg.dt * _symbol(grid)
    plus = 1 + half
    minus = 1 - half
    N = _nonlinear_term(grid, cfg)
    Nv = N(v)
    predicted = (plus * v + cfg.dt * Nv) / minus
    return (plus * v + 0.5 * cfg.dt * (Nv + N(predicted))) / minus


_steppers = {
    Integrator.ETDRK4: _etdrk4,
    Integrator.IMEX_CN: _imex_cn,
}


def check_step(u, dt, cfg):
    """
    Warn when dt leaves the stability envelope of the explicit part.

    ETDRK4 advances the dispersive part exactly; the cubic term acts like
    an advection with speed 3 max u^2. IMEX Crank-Nicolson is stable for
    the linear part but its phase error grows like dt k_max^3.
    """
    grid = u.grid
    kmax = max(grid.kmax1, grid.kmax2)
    advective = dt * kmax * 3 * float(np.max(u.values**2))
    if cfg.nonlinear and advective > 2.8:
        logging.warning('dt={} exceeds the explicit stability envelope '
                        '(dt k_max 3 max u^2 = {:.3g})'.format(dt, advective))
    if cfg.integrator == Integrator.IMEX_CN and dt * kmax**3 > np.pi:
        logging.warning('dt k_max^3 = {:.3g}: Crank-Nicolson phases are '
                        'unresolved'.format(dt * kmax**3))


def step(u, dt, cfg):
    """
    Advance a field by one time step.

    :param Field2D u: current state
    :param float dt: time step (overrides ``cfg.dt``)
    :param EvolutionConfig cfg: integrator selection and switches
    :rtype: Field2D
    :raises NaNDetected: if the new state is not finite
    """
    if dt != cfg.dt:
        cfg = cfg._replace(dt=float(dt))
    grid = u.grid
    v = _steppers[cfg.integrator](grid, grid.fft(u.values), cfg)
    values = grid.ifft(v)
    check_finite(values)
    return Field2D(grid, values)


def _peak_x1(u):
    i, _ = np.unravel_index(np.argmax(u.values), u.grid.shape)
    return u.grid.x1[i]


def _recenter(u):
    """Roll the frame so that the peak returns near x1 = 0."""
    grid = u.grid
    shift = int(round(_peak_x1(u) / grid.dx1))
    return Field2D(grid, np.roll(u.values, -shift, axis=0)), shift * grid.dx1


@traced
def evolve(u0, cfg, observers=(), until=None):
    """
    Integrate from ``u0`` over ``[0, cfg.T]``.

    At every ``snapshot_stride`` steps (and at t = 0) the mass and energy
    are recorded and each observer is called as ``observer(t, u, offset)``
    where ``offset`` is the accumulated frame translation along x1 (the
    lab-frame position of grid point x1 is ``x1 + offset``). With
    ``cfg.recenter`` the frame is rolled by whole grid cells whenever the
    peak passes L1/2.

    :param Field2D u0: initial state
    :param EvolutionConfig cfg: controls
    :param observers: callables whose return values are collected per
                      snapshot
    :param until: optional predicate ``until(t, u)`` checked after each
                  recorded snapshot; the run ends early when it is true
    :rtype: Trajectory
    :raises NaNDetected: with the failing time attached
    """
    check_finite(u0.values, 0.0, 'initial data')
    check_step(u0, cfg.dt, cfg)
    grid = u0.grid
    stepper = _steppers[cfg.integrator]
    times, snapshots, masses, energies, offsets = [], [], [], [], []
    observations = [[] for _ in observers]
    offset = 0.0
    u = u0
    v = grid.fft(u0.values)

    def record(t, u):
        times.append(t)
        masses.append(mass(u))
        energies.append(energy(u))
        offsets.append(offset)
        if cfg.keep_snapshots:
            snapshots.append(u)
        for observer, rows in zip(observers, observations):
            rows.append(observer(t, u, offset))

    record(0.0, u)
    n_steps = cfg.n_steps
    for n in range(1, n_steps + 1):
        v = stepper(grid, v, cfg)
        if n % cfg.snapshot_stride and n != n_steps:
            continue
        t = n * cfg.dt
        values = grid.ifft(v)
        try:
            check_finite(values, t)
            u = Field2D(grid, values)
        except NaNDetected:
            logging.error('evolution failed at t={:.6g}'.format(t))
            raise
        if cfg.recenter and _peak_x1(u) > grid.L1 / 2:
            u, shift = _recenter(u)
            offset += shift
            v = grid.fft(u.values)
            logging.info('recentered frame by {:.4g} at t={:.4g}'.format(
                shift, t))
        record(t, u)
        if until is not None and until(t, u):
            logging.info('evolution stopped at t={:.6g}'.format(t))
            break

    traj = Trajectory(np.array(times), snapshots, np.array(masses),
                      np.array(energies), np.array(offsets), observations)
    mass_drift, energy_drift = conservation_drift(traj)
    if mass_drift > cfg.tol_mass or energy_drift > cfg.tol_energy:
        logging.warning('conservation drift: mass {:.3g} (tol {:.1g}), '
                        'energy {:.3g} (tol {:.1g})'.format(
                            mass_drift, cfg.tol_mass,
                            energy_drift, cfg.tol_energy))
    return traj


def conservation_drift(traj):
    """
    Maximum relative mass drift and energy drift relative to
    ``1 + |E(0)|``.
    """
    mass_drift = np.max(np.abs(traj.mass - traj.mass[0])) / traj.mass[0]
    energy_drift = (np.max(np.abs(traj.energy - traj.energy[0]))
                    / (1 + abs(traj.energy[0])))
    return float(mass_drift), float(energy_drift)
