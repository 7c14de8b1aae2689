"""
Virial and monotonicity functionals evaluated on modulated trajectories.

``J_A = int eps F phi_A`` with the truncation phi_A and its rescaled form
``K_A = lambda (J_A - kappa)``; the localized mass ``I`` with the traveling
weight psi; tail masses and the remainder audit of the J_A identity.
"""

import logging
from collections import namedtuple

import numpy as np

from .modulation import rescaled_time
from .util import traced


__all__ = [
    'VirialConfig',
    'MonotonicityProbe',
    'DiagnosticSeries',
    'VirialValue',
    'SlopeReport',
    'MonotonicityReport',
    'AuditReport',
    'phi_A',
    'psi',
    'psi_derivatives',
    'J_A',
    'cross_term',
    'slope_constant',
    'K_A_series',
    'slope_report',
    'I_localized',
    'mass_marginal',
    'monotonicity_sweep',
    'right_tail_mass',
    'tail_decay_fit',
    'soliton_frame_tail',
    'pointwise_tail',
    'remainder_majorant',
    'virial_rate_audit',
]


class VirialConfig(namedtuple('VirialConfig', ['A', 'kappa'])):

    """Truncation radius A >= 1 and the constant kappa of the ground state."""

    __slots__ = ()

    def __new__(cls, A, kappa):
        A = float(A)
        if A < 1:
            raise ValueError("truncation radius A must be >= 1, got {}"
                             .format(A))
        return super(VirialConfig, cls).__new__(cls, A, float(kappa))

    @classmethod
    def from_ground_state(cls, gs, A):
        return cls(A, gs.kappa)


class MonotonicityProbe(namedtuple('MonotonicityProbe', [
        'M', 'x0', 't0', 'theta_fit'])):

    """Weight scale M >= 4, offset x0 > 0 and reference time t0."""

    __slots__ = ()

    def __new__(cls, M, x0, t0=0.0, theta_fit=None):
        M, x0 = float(M), float(x0)
        if M < 4:
            raise ValueError("weight scale M must be >= 4, got {}".format(M))
        if not x0 > 0:
            raise ValueError("offset x0 must be positive, got {}".format(x0))
        return super(MonotonicityProbe, cls).__new__(
            cls, M, x0, float(t0), theta_fit)


DiagnosticSeries = namedtuple('DiagnosticSeries', [
    's', 't', 'JA', 'KA', 'I', 'eps_l2', 'eps_h1', 'lam', 'x1',
    'M0', 'E0', 'b', 'n', 'kappa', 'A', 'dKA_ds'])

VirialValue = namedtuple('VirialValue', ['value', 'bound_ratio'])

SlopeReport = namedtuple('SlopeReport', [
    'slope_min', 'slope_mean', 'predicted', 'scaled_slope', 'monotone'])

MonotonicityReport = namedtuple('MonotonicityReport', [
    'theta_fit', 'per_x0', 'M'])

AuditReport = namedtuple('AuditReport', ['rows', 'C_fit', 'A'])


# weights

def phi_A(y1, A):
    """
    Smooth cutoff: 1 for y1 <= A, 0 for y1 >= 2A, and the quintic
    smoothstep ``1 - (10 u^3 - 15 u^4 + 6 u^5)``, u = (y1 - A)/A, between.
    |phi_A'| <= 15/(8A).
    """
    u = np.clip((np.asarray(y1, dtype=float) - A) / A, 0.0, 1.0)
    return 1 - u**3 * (10 - 15*u + 6*u**2)


def psi(x1, M):
    """psi(x) = (2/pi) arctan(exp(x/M)), evaluated as 1 - psi(-x) for x > 0."""
    w = np.asarray(x1, dtype=float) / M
    low = 2 / np.pi * np.arctan(np.exp(-np.abs(w)))
    return np.where(w > 0, 1 - low, low)


def psi_derivatives(x1, M):
    """Closed forms of (psi', psi'', psi''')."""
    w = np.asarray(x1, dtype=float) / M
    sech = 1 / np.cosh(w)
    tanh = np.tanh(w)
    d1 = sech / (np.pi * M)
    d2 = -sech * tanh / (np.pi * M**2)
    d3 = sech * (tanh**2 - sech**2) / (np.pi * M**3)
    return d1, d2, d3


# virial functional

def J_A(eps, gs, cfg):
    """
    J_A = int eps F phi_A, with the ratio |J_A| / ((1 + A^1/2) |eps|_2)
    of the linear bound.

    :rtype: VirialValue
    """
    grid = gs.grid
    grid.check(eps)
    value = grid.inner(eps.values, gs.F.values * phi_A(grid.X1, cfg.A))
    norm = grid.norm(eps.values)
    ratio = abs(value) / ((1 + np.sqrt(cfg.A)) * norm) if norm else 0.0
    return VirialValue(float(value), float(ratio))


def cross_term(eps, gs, A):
    """|int y2 F_y2 eps phi_A|."""
    grid = gs.grid
    F_y2 = grid.diff(gs.F.values, 2)
    return abs(grid.inner(grid.X2 * F_y2 * phi_A(grid.X1, A), eps.values))


def slope_constant(gs, spec):
    """b = int (Q + a chi0) Q = |Q|_2^2 - (int Q chi0)^2 / |chi0|_2^2."""
    grid = gs.grid
    chi = spec.chi0.values
    overlap = grid.inner(gs.Q.values, chi)
    return gs.mass - overlap**2 / grid.inner(chi, chi)


def K_A_series(rows, kappa, A, b=None, n=None, M0=None, E0=None):
    """
    Assemble the diagnostic series from observer rows.

    Each row is a mapping with keys ``t``, ``lam``, ``x1``, ``JA``,
    ``eps_l2``, ``eps_h1`` and optionally ``I``. The rescaled time s is
    accumulated from lambda^-3 and dK_A/ds is taken by second order
    differences in s.

    :rtype: DiagnosticSeries
    """
    column = lambda key: np.array([row[key] for row in rows], dtype=float)
    t = column('t')
    lam = column('lam')
    JA = column('JA')
    KA = lam * (JA - kappa)
    s = rescaled_time(t, lam)
    if len(s) >= 3:
        dKA = np.gradient(KA, s, edge_order=2)
    else:
        dKA = np.zeros_like(KA)
    I = column('I') if rows and 'I' in rows[0] else np.full_like(t, np.nan)
    return DiagnosticSeries(
        s=s, t=t, JA=JA, KA=KA, I=I,
        eps_l2=column('eps_l2'), eps_h1=column('eps_h1'),
        lam=lam, x1=column('x1'),
        M0=M0, E0=E0, b=b, n=n, kappa=kappa, A=A, dKA_ds=dKA)


def slope_report(series, s_min=1.0):
    """
    Slope of K_A over s >= s_min against the predicted 2 b / n.

    ``scaled_slope`` is slope_mean * n / b, comparable across n.
    """
    mask = series.s >= s_min
    if mask.sum() < 2:
        logging.warning('slope report: only {} samples beyond s={}'
                        .format(int(mask.sum()), s_min))
        mask = np.ones_like(series.s, dtype=bool)
    slopes = series.dKA_ds[mask]
    slope_mean = float(np.mean(slopes))
    predicted = scaled = None
    if series.b is not None and series.n:
        predicted = 2 * series.b / series.n
        scaled = slope_mean * series.n / series.b
    monotone = bool(np.all(np.diff(series.KA[mask]) >= 0))
    return SlopeReport(float(slopes.min()), slope_mean, predicted, scaled,
                       monotone)


# localized mass

def I_localized(u, x1_of_t0, t0, t, weight, offset=0.0, full=False):
    """
    I(t) = int u^2 psi(x1 - x1(t0) + (t0 - t)/2 - x0).

    ``weight`` supplies M and x0. ``offset`` is the frame translation of
    u (lab position = grid x1 + offset). With ``full`` the weight is
    replaced by 1 and the result is the mass.
    """
    grid = u.grid
    density = u.values**2
    if full:
        return grid.integrate(density)
    arg = grid.X1 + offset - x1_of_t0 + 0.5 * (t0 - t) - weight.x0
    return grid.integrate(density * psi(arg, weight.M))


def mass_marginal(u):
    """int u^2 dx2 as a function of x1."""
    return u.grid.dx2 * np.sum(u.values**2, axis=1)


@traced
def monotonicity_sweep(grid, times, marginals, offsets, x1_series, M,
                       x0_list=(2, 4, 8, 16)):
    """
    theta_fit = max over x0, t0 and t <= t0 of (I(t0) - I(t)) e^(x0/M),
    computed from stored mass marginals.

    :param grid: grid of the marginals
    :param times: snapshot times
    :param marginals: array (n_times, N1) of x2-integrated densities
    :param offsets: frame offsets per snapshot
    :param x1_series: lab-frame soliton positions per snapshot
    :rtype: MonotonicityReport
    """
    times = np.asarray(times, dtype=float)
    marginals = np.asarray(marginals, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    x1_series = np.asarray(x1_series, dtype=float)
    positions = grid.x1[None, :] + offsets[:, None]
    per_x0 = {}
    for x0 in x0_list:
        worst = 0.0
        for k, t0 in enumerate(times):
            arg = (positions[:k + 1] - x1_series[k]
                   + 0.5 * (t0 - times[:k + 1, None]) - x0)
            I = grid.dx1 * np.sum(marginals[:k + 1] * psi(arg, M), axis=1)
            worst = max(worst, float(np.max(I[-1] - I)))
        per_x0[float(x0)] = worst * np.exp(x0 / M)
    theta = max(per_x0.values()) if per_x0 else 0.0
    return MonotonicityReport(theta, per_x0, float(M))


# tails

def right_tail_mass(eps, y0):
    """int_{y1 > y0} int eps^2."""
    grid = eps.grid
    mask = grid.x1 > y0
    return grid.dx1 * grid.dx2 * float(np.sum(eps.values[mask]**2))


def tail_decay_fit(eps, y0_list):
    """
    Log-linear fit of the right tail mass against y0.

    :return: ``(masses, slope)``
    """
    y0 = np.asarray(y0_list, dtype=float)
    masses = np.array([right_tail_mass(eps, y) for y in y0])
    slope = np.polyfit(y0, np.log(masses), 1)[0]
    return masses, float(slope)


def soliton_frame_tail(u, x1_t, x0_list, M, offset=0.0):
    """
    Mass of u beyond x1(t) + x0 and the smallest C with mass <= C
    e^(-x0/M) over the x0 list.

    :return: ``(masses, C_fit)``
    """
    grid = u.grid
    marginal = mass_marginal(u)
    positions = grid.x1 + offset
    x0 = np.asarray(x0_list, dtype=float)
    masses = np.array([grid.dx1 * np.sum(marginal[positions > x1_t + d])
                       for d in x0])
    return masses, float(np.max(masses * np.exp(x0 / M)))


def pointwise_tail(eps, K, levels=None):
    """
    sup |eps| on the dyadic windows [K 2^j, K 2^(j+1)) of y1 inside the
    box, and the log-log slope of the sups against the window starts.

    :return: ``(starts, sups, slope)``
    """
    grid = eps.grid
    starts = []
    sups = []
    j = 0
    while K * 2**(j + 1) <= grid.L1 and (levels is None or j < levels):
        lo, hi = K * 2**j, K * 2**(j + 1)
        mask = (grid.x1 >= lo) & (grid.x1 < hi)
        starts.append(lo)
        sups.append(float(np.abs(eps.values[mask]).max()))
        j += 1
    starts = np.array(starts)
    sups = np.array(sups)
    slope = (float(np.polyfit(np.log(starts), np.log(sups), 1)[0])
             if len(starts) >= 2 else float('nan'))
    return starts, sups, slope


# remainder audit

def remainder_majorant(eps, gs, A, lam_rate, x_rate):
    """
    ``|eps|^2 + |eps|^2 |eps|_H1 + A^-1/2 |eps| + |r_x| (1/A + |eps|)
    + |r_lam| (1/A + |eps| + A^1/2 |eps|_{L2(y1 >= A)} + |int y2 F_y2
    eps phi_A|)`` with L2 norms unless marked.
    """
    grid = gs.grid
    n2 = grid.norm(eps.values)
    h1 = grid.h1_norm(eps.values)
    tail = np.sqrt(right_tail_mass(eps, A))
    cross = cross_term(eps, gs, A)
    return (n2**2 + n2**2 * h1 + n2 / np.sqrt(A)
            + abs(x_rate) * (1 / A + n2)
            + abs(lam_rate) * (1 / A + n2 + np.sqrt(A) * tail + cross))


@traced
def virial_rate_audit(modulation, states, rates, cfg, t=None):
    """
    Term table of ``dJ_A/ds = -r_lam (J_A - kappa) + 2 (1 - r_x/2) int eps Q
    + R``.

    With the snapshot times ``t`` the left side is the finite-difference
    derivative of J_A in s, so R is measured on the trajectory itself;
    ``R_rhs`` is the same remainder with dJ_A/ds taken from the eps
    equation (``int eps_s F phi_A``) and serves as a cross-check. Without
    ``t`` (or with fewer than three snapshots) R falls back to the eps
    equation. R is checked against the remainder majorant and ``C_fit``
    is the largest ratio.

    :param Modulation modulation: projection machinery
    :param states: ModulationState per snapshot
    :param rates: RateEstimate per snapshot
    :param VirialConfig cfg: truncation
    :param t: snapshot times in the lab frame
    :rtype: AuditReport
    """
    gs = modulation.gs
    grid = gs.grid
    weight = gs.F.values * phi_A(grid.X1, cfg.A)
    JA = np.array([grid.inner(ms.eps.values, weight) for ms in states])
    fd = None
    if t is not None and len(states) >= 3:
        s = rescaled_time(t, [ms.lam for ms in states])
        fd = np.gradient(JA, s, edge_order=2)
    rows = []
    for k, (ms, rate) in enumerate(zip(states, rates)):
        dJ = grid.inner(modulation.eps_rhs(ms, rate).values, weight)
        scaling = -rate.lam_rate * (JA[k] - cfg.kappa)
        mass = 2 * (1 - 0.5 * rate.x_rate) * grid.inner(
            ms.eps.values, gs.Q.values)
        R_rhs = dJ - scaling - mass
        R = R_rhs if fd is None else fd[k] - scaling - mass
        majorant = remainder_majorant(ms.eps, gs, cfg.A,
                                      rate.lam_rate, rate.x_rate)
        rows.append({
            'JA': float(JA[k]),
            'dJA_ds': float(dJ),
            'dJA_ds_fd': float(fd[k]) if fd is not None else None,
            'scaling_term': float(scaling),
            'mass_term': float(mass),
            'R': float(R),
            'R_rhs': float(R_rhs),
            'majorant': float(majorant),
            'ratio': float(abs(R) / majorant) if majorant else 0.0,
            'cross_term': float(cross_term(ms.eps, gs, cfg.A)),
        })
    C_fit = max((row['ratio'] for row in rows), default=0.0)
    return AuditReport(rows, C_fit, cfg.A)
