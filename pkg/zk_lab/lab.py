"""
Laboratory session: settings, artifacts and the experiments built on them.

A :class:`Laboratory` holds one parsed configuration and an output
directory. Ground state and spectrum are loaded from the directory or,
with ``compute=True``, computed and saved on first use.
"""

import logging
import math
import os
import time
import warnings
from collections import namedtuple

import numpy as np

from . import __version__
from .airy_kernel import (
    Region, certify_decay, certify_duhamel, certify_factorization,
    certify_linear_decay, decay_law)
from .artifacts import (
    CHI_FILE, DIAG_FILE, Q_FILE, SERIES_FILE, find_snapshots,
    load_ground_state, load_snapshot, load_spectrum, read_ground_state,
    read_json, require, save_diagnostics, save_ground_state, save_snapshot,
    save_spectrum, write_json)
from .config import (
    config_dict, config_hash, evolution_from_config, grid_from_config,
    load_config, parse_config)
from .errors import (
    DegenerateSystem, DomainError, GridMismatch, HypothesisViolated,
    InsufficientSamples, NewtonDiverged, NoPeak)
from .functionals import (
    I_localized, J_A, K_A_series, MonotonicityProbe, VirialConfig,
    cross_term, mass_marginal, monotonicity_sweep, pointwise_tail,
    slope_constant, slope_report, soliton_frame_tail, tail_decay_fit,
    virial_rate_audit)
from .ground_state import (
    ground_state_report, kappa_radial, solve_Q_2d, solve_radial_Q)
from .linearized import (
    apply_L, coercivity_probe, compute_spectrum, radial_spectrum)
from .modulation import (
    Modulation, control_constant, energy_linearization, energy_of,
    mass_relation, rescaled_time, tube_distance)
from .spectral_grid import Field2D, load_field, save_field
from .util import append_ndjson, jsonable, traced, write_csv
from .zk_evolution import conservation_drift, energy, evolve, mass


__all__ = [
    'InstabilityConfig',
    'InstabilityReport',
    'CheckResult',
    'Laboratory',
    'ModulationObserver',
    'perturbation',
    'rate_agreement',
    'run_instability',
    'acceptance',
]


_InstabilityConfig = namedtuple('InstabilityConfig', [
    'n', 'a', 'A', 'M', 'alpha0', 'T_max', 'dt', 'snapshot_stride',
    'growth_factor', 'label'])


class InstabilityConfig(_InstabilityConfig):

    """
    Controls of the instability experiment. ``n`` is the divisor of the
    initial perturbation ``(Q + a chi0)/n``; ``n = None`` is the control
    run from Q itself. ``a`` is computed from the spectrum.
    """

    __slots__ = ()

    def __new__(cls, n, a, A=8.0, M=4.0, alpha0=0.3, T_max=60.0, dt=0.002,
                snapshot_stride=50, growth_factor=3.0, label='default'):
        if n is not None and int(n) < 5:
            raise ValueError("n must be >= 5, got {}".format(n))
        if not 0 < alpha0 <= 0.5:
            raise ValueError("alpha0 must lie in (0, 0.5], got {}".format(
                alpha0))
        return super(InstabilityConfig, cls).__new__(
            cls, None if n is None else int(n), float(a), float(A),
            float(M), float(alpha0), float(T_max), float(dt),
            int(snapshot_stride), float(growth_factor), str(label))


InstabilityReport = namedtuple('InstabilityReport', [
    'n', 'exit_time', 'exit_reason', 'KA_slope_min', 'KA_scaled_slope',
    'b', 'b_over_2n', 'tube_distance', 'eps_h1', 'growth', 'theta_fit',
    'tail_slope', 'pointwise_slope', 'frame_tail_growth', 'C5',
    'rate_constant', 'JA_bound_c', 'cross_ratio', 'ortho_initial', 'E0',
    'flags', 'passed', 'rows'])

CheckResult = namedtuple('CheckResult', [
    'name', 'passed', 'details', 'seconds'])


def perturbation(gs, spec, n):
    """
    Initial data ``u0 = Q + (Q + a chi0)/n`` with ``a = -int chi0 Q /
    |chi0|^2``, and the residuals of ``u0 - Q`` against (chi0, Q_y1, Q_y2)
    relative to the norms of both factors.

    :return: ``(u0, a, residuals)``
    """
    grid = gs.grid
    Q = gs.Q.values
    chi = spec.chi0.values
    a = -grid.inner(chi, Q) / grid.inner(chi, chi)
    eps0 = (Q + a * chi) / n
    scale = grid.norm(eps0)
    residuals = [abs(grid.inner(eps0, c)) / (scale * grid.norm(c))
                 for c in (chi, gs.Qy1.values, gs.Qy2.values)]
    return Field2D(grid, Q + eps0), float(a), residuals


class ModulationObserver(object):

    """
    Per-snapshot diagnostics of a run: tube distance, modulation
    parameters, rates, J_A, K_A, the localized mass I and the mass and
    energy relations.

    Rows are kept in ``rows``; the x2-integrated mass marginals in
    ``marginals``. With ``alpha0`` set, the first snapshot outside the
    tube (or the first failed decomposition) is recorded as the exit.

    I is measured against the first decomposed snapshot (reference time
    and position) with the weight scale ``M`` and the first entry of
    ``x0_list``; the soliton frame tail uses the whole list. The linear
    J_A bound ratio is recorded for each radius in ``bound_radii``.
    """

    def __init__(self, modulation, virial, alpha0=None, tol=1e-9, M=4.0,
                 x0_list=(2.0, 4.0, 8.0, 16.0),
                 bound_radii=(4.0, 8.0, 16.0)):
        self.modulation = modulation
        self.gs = modulation.gs
        self.virial = virial
        self.alpha0 = alpha0
        self.tol = tol
        self.M = float(M)
        self.x0_list = [float(x0) for x0 in x0_list]
        self.localization = MonotonicityProbe(M, self.x0_list[0])
        self.bounds = [VirialConfig(A, virial.kappa) for A in bound_radii]
        self.rows = []
        self.marginals = []
        self.reference = None
        self.last_state = None
        self.exit_time = None
        self.exit_reason = None
        self.E0 = None

    @property
    def exited(self):
        return self.exit_reason is not None

    @property
    def bound_radii(self):
        return [cfg.A for cfg in self.bounds]

    def _exit(self, t, reason):
        if self.exit_reason is None:
            self.exit_time, self.exit_reason = float(t), reason
            logging.info('exit at t={:.4g}: {}'.format(t, reason))

    def __call__(self, t, u, offset):
        gs = self.gs
        grid = gs.grid
        if self.E0 is None:
            self.E0 = energy(u)
        i, _ = np.unravel_index(np.argmax(u.values), grid.shape)
        distance, x_tube = tube_distance(u, gs, grid.x1[i])
        row = {'t': float(t), 'offset': float(offset),
               'tube_distance': distance, 'tube_x1': x_tube,
               'x1_lab': x_tube + offset}
        self.marginals.append(mass_marginal(u))
        if self.alpha0 is not None and distance > self.alpha0:
            self._exit(t, 'tube')
        try:
            ms = self.modulation.decompose(u, tol=self.tol)
            rate = self.modulation.rates(ms)
        except (NewtonDiverged, NoPeak, DegenerateSystem) as e:
            logging.warning('modulation lost at t={:.4g}: {}'.format(t, e))
            row['decomposed'] = False
            self._exit(t, type(e).__name__)
            self.rows.append(row)
            return row
        self.last_state = ms
        eps = ms.eps
        x1_lab = ms.x1 + offset
        if self.reference is None:
            self.reference = (float(t), x1_lab)
        t0, x1_t0 = self.reference
        norms = self.modulation.constraint_norms
        JA = J_A(eps, gs, self.virial)
        remainder, c0 = energy_linearization(eps, gs)
        _, frame_C = soliton_frame_tail(u, x1_lab, self.x0_list, self.M,
                                        offset)
        row.update(
            decomposed=True,
            lam=ms.lam,
            x1=ms.x1,
            x1_lab=x1_lab,
            eps_l2=ms.eps_l2,
            eps_h1=ms.eps_h1,
            eps_Q=grid.inner(eps.values, gs.Q.values),
            ortho_rel=float(np.max(
                np.abs(ms.ortho_res) / (norms * (ms.eps_l2 + 1e-4)))),
            iterations=ms.iterations,
            lam_rate=rate.lam_rate,
            x_rate=rate.x_rate,
            det=rate.det,
            control_ratio=rate.control_ratio,
            JA=JA.value,
            JA_bound_ratio=JA.bound_ratio,
            JA_bounds=[J_A(eps, gs, cfg).bound_ratio for cfg in self.bounds],
            cross_term=cross_term(eps, gs, self.virial.A),
            KA=ms.lam * (JA.value - self.virial.kappa),
            I=I_localized(u, x1_t0, t0, t, self.localization, offset),
            frame_tail_C=frame_C,
            mass_relation=mass_relation(eps, gs),
            energy_Q_eps=energy_of(eps, gs),
            energy_scaled=ms.lam**2 * self.E0,
            energy_remainder=remainder,
            c0=c0,
        )
        self.rows.append(row)
        return row

    def stop(self, t, u):
        return self.exited


def rate_agreement(rows):
    """
    Largest difference between the modulation rates and finite
    differences of lambda(s), x(s), relative to the largest rate.

    :return: ``(lam_error, x_error)``
    """
    t = np.array([r['t'] for r in rows])
    lam = np.array([r['lam'] for r in rows])
    x = np.array([r['x1_lab'] for r in rows])
    s = rescaled_time(t, lam)
    lam_fd = np.gradient(np.log(lam), s, edge_order=2)
    x_fd = np.gradient(x, s, edge_order=2) / lam - 1
    lam_rate = np.array([r['lam_rate'] for r in rows])
    x_rate = np.array([r['x_rate'] for r in rows])
    inner = slice(1, -1)
    lam_err = (np.max(np.abs(lam_fd - lam_rate)[inner])
               / max(np.abs(lam_rate).max(), 1e-12))
    x_err = (np.max(np.abs(x_fd - x_rate)[inner])
             / max(np.abs(x_rate).max(), 1e-12))
    return float(lam_err), float(x_err)


class _RunWriter(object):

    """Observer that writes snapshots and the series file of a run."""

    def __init__(self, run_dir, stream, **meta):
        self.run_dir = run_dir
        self.stream = stream
        self.meta = meta
        self.index = 0

    def __call__(self, t, u, offset):
        save_snapshot(self.run_dir, self.index, u, t, offset, **self.meta)
        append_ndjson(self.stream, {
            'index': self.index, 't': t, 'offset': offset,
            'mass': mass(u), 'energy': energy(u),
            'peak': float(u.values.max()),
        })
        self.index += 1


class Laboratory(object):

    """
    One laboratory session.

    :param config: parsed configuration (defaults when omitted)
    :param str directory: artifact directory (``output.directory``)
    :param bool compute: compute missing ground state and spectrum
                         instead of raising ArtifactMissing
    """

    def __init__(self, config=None, directory=None, compute=False):
        self.config = load_config() if config is None else config
        self.directory = directory or self.config['output']['directory']
        self.compute = compute
        self.grid = grid_from_config(self.config)
        self._profile = None
        self._gs = None
        self._spec = None
        self._modulation = None

    def meta(self):
        """Provenance embedded in every report."""
        return {
            'config_hash': config_hash(self.config),
            'version': __version__,
            'grid': list(self.grid),
        }

    def export_settings(self):
        """Effective settings with their hash and the code version."""
        return dict(self.meta(), config=config_dict(self.config))

    # static objects

    @property
    def profile(self):
        if self._profile is None:
            self._profile = solve_radial_Q(
                p=self.config['ground_state']['p'])
        return self._profile

    @traced
    def ground_state(self, tol=None, out=None):
        """
        Compute, report and save the ground state on the session grid.

        :param float tol: residual target, ``ground_state.tol`` by default
        :param str out: also write the field there, report in the sidecar
        """
        c = self.config['ground_state']
        tol = c['tol'] if tol is None else tol
        profile = self.profile
        gs = solve_Q_2d(self.grid, profile, tol=tol, max_iter=c['max_iter'])
        report = ground_state_report(gs, profile)
        report['kappa_radial'] = kappa_radial(profile)
        report['tol'] = tol
        save_ground_state(self.directory, gs, report, **self.meta())
        if out:
            save_field(out, gs.Q, p=gs.p, report=jsonable(report),
                       **self.meta())
            logging.info('wrote {}'.format(out))
        self._gs = gs
        self._modulation = None
        return gs, report

    @traced
    def spectrum(self, q=None, out=None):
        """
        Compute, report and save the linearized spectrum.

        :param str q: ground state field file to use instead of the stored
                      one; it must live on the session grid
        :param str out: also write the report there
        """
        c = self.config['spectrum']
        if q is not None:
            self._gs = self._check_grid(read_ground_state(q), q)
        gs = self.gs
        spec = compute_spectrum(gs, tol=c['tol'], n_samples=c['n_samples'],
                                rng_seed=c['rng_seed'],
                                anomaly_tol=c['anomaly_tol'])
        extra = {'radial_lambda0': radial_spectrum(self.profile).lambda0}
        if c['constraints'].lower() != 'chi0':
            coercivity = coercivity_probe(
                gs, spec, c['n_samples'], c['rng_seed'],
                c['constraints'].lower())
            extra['coercivity_constraints'] = coercivity.constraints
            extra['coercivity_sigma0'] = coercivity.sigma0_est
        save_spectrum(self.directory, spec, **dict(self.meta(), **extra))
        self._spec = spec
        self._modulation = None
        report = dict(spec._asdict(), **extra)
        del report['chi0']
        if out:
            write_json(out, dict(report, **self.meta()))
        return spec, report

    def _artifact(self, name):
        return os.path.join(self.directory, name)

    def _check_grid(self, gs, path):
        if gs.grid != self.grid:
            raise GridMismatch(
                "{} holds {}, the configuration asks for {}".format(
                    path, gs.grid, self.grid))
        return gs

    @property
    def gs(self):
        if self._gs is None:
            if self.compute and not os.path.exists(self._artifact(Q_FILE)):
                self.ground_state()
            else:
                self._gs = self._check_grid(
                    load_ground_state(self.directory), self._artifact(Q_FILE))
        return self._gs

    @property
    def spec(self):
        if self._spec is None:
            if self.compute and not os.path.exists(self._artifact(CHI_FILE)):
                self.spectrum()
            else:
                self._spec = load_spectrum(self.directory, self.gs)
        return self._spec

    @property
    def modulation(self):
        if self._modulation is None:
            self._modulation = Modulation(self.gs, self.spec)
        return self._modulation

    def virial(self, A=None):
        if A is None:
            A = self.config['virial']['A']
        return VirialConfig.from_ground_state(self.gs, A)

    # initial data

    def initial_data(self, source):
        """
        ``builtin:soliton``, ``builtin:perturbed:n=30`` or the path of a
        field file on the session grid.
        """
        if source.startswith('builtin:'):
            kind, _, args = source[len('builtin:'):].partition(':')
            params = dict(item.split('=', 1)
                          for item in args.split(',') if item)
            if kind == 'soliton':
                return self.gs.Q
            if kind == 'perturbed':
                n = int(params.get('n', self.config['instability']['n']))
                return self.perturbed(n)
            raise DomainError("unknown builtin initial data {!r}".format(
                source))
        u, _ = load_field(require(source))
        if u.grid != self.grid:
            raise GridMismatch("{} lives on {}, expected {}".format(
                source, u.grid, self.grid))
        return u

    def perturbed(self, n):
        u0, a, residuals = perturbation(self.gs, self.spec, n)
        logging.info('perturbed soliton n={}: a={:.6g}, orthogonality '
                     'residuals {}'.format(
                         n, a, ', '.join('{:.2g}'.format(r)
                                         for r in residuals)))
        return u0

    # runs

    @traced
    def evolve(self, u0, run_dir, cfg=None, observers=(), until=None,
               **meta):
        """
        Evolve and write ``series.ndjson``, the snapshots and
        ``run.json`` into ``run_dir``.

        :rtype: Trajectory (without stored snapshots)
        """
        if cfg is None:
            cfg = evolution_from_config(self.config)
        cfg = cfg._replace(keep_snapshots=False)
        os.makedirs(run_dir, exist_ok=True)
        meta = dict(self.meta(), **meta)
        with open(os.path.join(run_dir, SERIES_FILE), 'w',
                  encoding='utf-8') as stream:
            writer = _RunWriter(run_dir, stream, **meta)
            traj = evolve(u0, cfg, [writer] + list(observers), until)
        mass_drift, energy_drift = conservation_drift(traj)
        settings = dict(cfg._asdict(), integrator=str(cfg.integrator))
        write_json(os.path.join(run_dir, 'run.json'), dict(
            meta, evolution=settings, mass_drift=mass_drift,
            energy_drift=energy_drift, t_end=float(traj.times[-1]),
            snapshots=len(traj.times)))
        return traj

    def _run_meta(self, run_dir):
        path = os.path.join(run_dir, 'run.json')
        return read_json(path) if os.path.exists(path) else {}

    @traced
    def diagnose(self, run_dir, A=None, M=None, x0_list=None, out=None):
        """
        Modulation and functional diagnostics of a stored run, written to
        ``out`` (``diag.ndjson`` in the run directory by default) behind a
        provenance header.

        :return: ``(series, slope, monotonicity)``
        """
        gs = self.gs
        mono = self.config['monotonicity']
        M = mono['M'] if M is None else M
        x0_list = mono['x0_list'] if x0_list is None else x0_list
        n = self._run_meta(run_dir).get('n')
        observer = ModulationObserver(
            self.modulation, self.virial(A),
            tol=self.config['modulation']['tol'], M=M, x0_list=x0_list)
        offsets = []
        for path in find_snapshots(run_dir):
            t, offset, u = load_snapshot(path)
            offsets.append(offset)
            observer(t, u, offset)
            if observer.exited:
                break
        save_diagnostics(out or os.path.join(run_dir, DIAG_FILE),
                         observer.rows, run=run_dir, **self.meta())
        rows = [r for r in observer.rows if r.get('decomposed')]
        if not rows:
            raise InsufficientSamples('no snapshot could be decomposed')
        b = slope_constant(gs, self.spec)
        series = K_A_series(rows, gs.kappa, observer.virial.A, b, n,
                            M0=rows[0]['mass_relation'], E0=observer.E0)
        slope = slope_report(series)
        monotonicity = self._monotonicity(observer.rows, observer.marginals,
                                          offsets, M, x0_list)
        return series, slope, monotonicity

    def _monotonicity(self, rows, marginals, offsets, M, x0_list):
        t0_max = self.config['monotonicity']['t0_max']
        keep = [k for k, r in enumerate(rows) if r['t'] <= t0_max]
        return monotonicity_sweep(
            self.grid, [rows[k]['t'] for k in keep],
            [marginals[k] for k in keep], [offsets[k] for k in keep],
            [rows[k]['x1_lab'] for k in keep], M, x0_list)

    @traced
    def audit_virial(self, run_dir, A_list=(4.0, 8.0, 16.0)):
        """
        Term table of the J_A identity along a stored run for each A,
        written to ``virial_audit.csv``.

        :return: list of AuditReport
        """
        modulation = self.modulation
        tol = self.config['modulation']['tol']
        states, rates, times = [], [], []
        for path in find_snapshots(run_dir):
            t, offset, u = load_snapshot(path)
            try:
                ms = modulation.decompose(u, tol=tol)
                rate = modulation.rates(ms)
            except (NewtonDiverged, NoPeak, DegenerateSystem) as e:
                logging.warning('audit stops at t={:.4g}: {}'.format(t, e))
                break
            states.append(ms)
            rates.append(rate)
            times.append(t)
        reports = []
        table = []
        for A in A_list:
            report = virial_rate_audit(modulation, states, rates,
                                       self.virial(A), t=times)
            reports.append(report)
            for t, row in zip(times, report.rows):
                table.append(dict(row, t=t, A=A))
            logging.info('virial audit A={}: C_fit={:.4g}'.format(
                A, report.C_fit))
        columns = ['A', 't', 'JA', 'dJA_ds', 'dJA_ds_fd', 'scaling_term',
                   'mass_term', 'R', 'R_rhs', 'majorant', 'ratio',
                   'cross_term']
        write_csv(os.path.join(run_dir, 'virial_audit.csv'), table, columns)
        return reports

    # kernel certification

    @traced
    def kernel(self, certify=('fs', 'dfs', 'linear', 'duhamel'),
               params=None):
        """
        Kernel certification suite: factorization against quadrature and
        the decay laws of A (``fs``) and A_x (``dfs``), the linear flow
        decay (``linear``) and the Duhamel decay (``duhamel``).

        ``params`` holds section overrides (``kernel``, ``linear_decay``,
        ``duhamel``) validated like the configuration file.

        :return: dict of results by name
        :raises ConfigInvalid: for invalid overrides
        """
        config = self.config
        if params:
            config = parse_config(params, self.config)
        results = {}
        k = config['kernel']
        lam_range = (k['lam_min'], k['lam_max'])
        if 'fs' in certify:
            results['factorization'] = certify_factorization()
        for kernel, name in (('A', 'fs'), ('Ax', 'dfs')):
            if name not in certify:
                continue
            results[name] = [
                certify_decay(decay_law(region, kernel), lam_range,
                              n_samples=k['n_samples'],
                              tolerance=k['tolerance'])
                for region in map(Region, range(len(Region._value_names)))]
        if 'linear' in certify:
            d = config['linear_decay']
            results['linear'] = certify_linear_decay(
                d['sigma'], x_window=(d['x_lo'], d['x_hi']),
                grid=grid_from_config(config, 'linear_decay'),
                tolerance=d['tolerance'])
        if 'duhamel' in certify:
            d = config['duhamel']
            sigma = d['sigma']
            decay = config['linear_decay']
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter('always', HypothesisViolated)
                results['duhamel'] = certify_duhamel(
                    d['nu'], 3 * sigma - 21/4, 2 * sigma - 15/2, d['r'],
                    x_window=(decay['x_lo'], decay['x_hi']),
                    grid=grid_from_config(config, 'linear_decay'),
                    tau0=d['tau0'], tolerance=d['tolerance'])
            for w in caught:
                logging.warning(str(w.message))
        return results

    def instability_config(self, n='config', **overrides):
        """InstabilityConfig from the settings; ``n=None`` for the control
        run."""
        c = self.config['instability']
        if n == 'config':
            n = c['n']
        if n is None:
            a = 0.0
        else:
            _, a, _ = perturbation(self.gs, self.spec, n)
        settings = dict(
            A=self.config['virial']['A'],
            M=self.config['monotonicity']['M'],
            alpha0=self.config['modulation']['alpha0'],
            T_max=c['T_max'], dt=c['dt'],
            snapshot_stride=c['snapshot_stride'],
            growth_factor=c['growth_factor'], label=c['label'])
        settings.update(overrides)
        return InstabilityConfig(n, a, **settings)


@traced
def run_instability(lab, icfg, run_dir=None):
    """
    Evolve ``Q + (Q + a chi0)/n`` (or Q for the control run) with the
    modulation observer until the tube is left, the decomposition fails
    or ``T_max`` is reached.

    The perturbed run passes when the K_A slope is positive for s >= 1,
    the tube is left or |eps|_H1 grows by ``growth_factor``, and none of
    the side checks is flagged:

    ``H1-control``, ``rate-control``
        finite fitted constants of the H1 and rate controls
    ``JA-bound``
        the fitted constants of the linear J_A bound for A = 4, 8, 16
        agree within a factor 10
    ``cross-term``
        |lambda_s/lambda| times the cross term stays below b/(2n) for
        s >= 1 inside the tube
    ``frame-tail``
        the soliton frame tail constant grows at most tenfold
    ``tail-decay``, ``pointwise-tail``
        the right tail of the last eps decays at rate at least
        1/(2M) - 0.1 in mass and its dyadic sups decrease

    The control run passes when it stays in the tube with
    |eps|_2 < 1e-6.

    :param Laboratory lab: session with ground state and spectrum
    :param InstabilityConfig icfg: controls
    :param str run_dir: also write the run files there
    :rtype: InstabilityReport
    :raises ArtifactMissing: if ground state or spectrum are missing
    """
    gs, spec = lab.gs, lab.spec
    flags = []
    if icfg.n is None:
        u0 = gs.Q
        ortho = [0.0, 0.0, 0.0]
    else:
        u0, _, ortho = perturbation(gs, spec, icfg.n)
        if max(ortho) > 1e-9:
            logging.warning('initial perturbation orthogonality {:.3g}'
                            .format(max(ortho)))
            flags.append('orthogonality')
    observer = ModulationObserver(
        lab.modulation, lab.virial(icfg.A), alpha0=icfg.alpha0,
        tol=lab.config['modulation']['tol'], M=icfg.M,
        x0_list=lab.config['monotonicity']['x0_list'])
    cfg = evolution_from_config(
        lab.config, dt=icfg.dt, T=icfg.T_max,
        snapshot_stride=icfg.snapshot_stride, recenter=True,
        keep_snapshots=False)
    logging.info('instability run {!r}: n={}, T_max={}'.format(
        icfg.label, icfg.n, icfg.T_max))
    if run_dir is None:
        traj = evolve(u0, cfg, [observer], observer.stop)
    else:
        traj = lab.evolve(u0, run_dir, cfg, [observer], observer.stop,
                          n=icfg.n, label=icfg.label)
        save_diagnostics(os.path.join(run_dir, DIAG_FILE), observer.rows,
                         label=icfg.label, n=icfg.n, **lab.meta())
    report = _instability_report(lab, icfg, observer, traj.offsets, ortho,
                                 flags)
    logging.info('instability run {!r}: exit {} at {}, passed={}'.format(
        icfg.label, report.exit_reason, report.exit_time, report.passed))
    return report


def _instability_report(lab, icfg, observer, offsets, ortho, flags):
    gs = lab.gs
    rows = [r for r in observer.rows if r.get('decomposed')]
    if not rows:
        raise InsufficientSamples('no snapshot could be decomposed')
    column = lambda key: np.array([r[key] for r in rows], dtype=float)
    eps_h1 = column('eps_h1')
    tube = np.array([r['tube_distance'] for r in observer.rows])
    monotonicity = lab._monotonicity(observer.rows, observer.marginals,
                                     offsets, icfg.M,
                                     lab.config['monotonicity']['x0_list'])
    if icfg.n is None:
        exited = observer.exited
        quiet = float(column('eps_l2').max()) < 1e-6
        if not quiet:
            flags.append('control-eps')
        return InstabilityReport(
            None, observer.exit_time, observer.exit_reason, None, None,
            None, None, tube, eps_h1, None, monotonicity.theta_fit, None,
            None, None, None, None, None, None, ortho, observer.E0, flags,
            bool(not exited and quiet), observer.rows)

    b = slope_constant(gs, lab.spec)
    series = K_A_series(rows, gs.kappa, icfg.A, b, icfg.n,
                        M0=rows[0]['mass_relation'], E0=observer.E0)
    slope = slope_report(series)
    growth = float(eps_h1.max() / eps_h1[0])
    if observer.exited:
        KA_exit = series.KA[-1]
        KA_one = float(np.interp(1.0, series.s, series.KA))
        if not KA_exit > KA_one:
            flags.append('KA-exit')
    checks = {
        'KA-slope': slope.slope_min > 0,
        'no-exit': observer.exited or growth >= icfg.growth_factor,
    }

    C5 = control_constant(eps_h1, eps_h1[0], rows[0]['eps_Q'], icfg.alpha0)
    rate_constant = float(np.max(column('control_ratio')))
    checks['H1-control'] = np.isfinite(C5)
    checks['rate-control'] = np.isfinite(rate_constant)

    bounds = np.array([r['JA_bounds'] for r in rows], dtype=float)
    JA_c = dict(zip(observer.bound_radii, bounds.max(axis=0)))
    low, high = min(JA_c.values()), max(JA_c.values())
    checks['JA-bound'] = bool(np.isfinite(high) and 0 < low
                              and high <= 10 * low)

    inside = column('tube_distance') <= icfg.alpha0
    late = (series.s >= 1.0) & inside
    weighted = np.abs(column('lam_rate')) * column('cross_term')
    cross_ratio = (float(weighted[late].max() * icfg.n / b)
                   if late.any() else 0.0)
    checks['cross-term'] = cross_ratio < 0.5

    frame = column('frame_tail_C')
    frame_growth = float(frame.max() / frame[0]) if frame[0] else np.inf
    checks['frame-tail'] = frame_growth <= 10

    tail_slope = pointwise_slope = None
    if observer.last_state is not None:
        eps = observer.last_state.eps
        y0 = lab.config['monotonicity']['y0_list']
        _, tail_slope = tail_decay_fit(eps, y0)
        _, _, pointwise_slope = pointwise_tail(eps, 2.0)
    checks['tail-decay'] = (tail_slope is not None
                            and tail_slope <= -1 / (2 * icfg.M) + 0.1)
    checks['pointwise-tail'] = (pointwise_slope is not None
                                and pointwise_slope < 0)

    flags.extend(name for name, ok in checks.items() if not ok)
    return InstabilityReport(
        n=icfg.n,
        exit_time=observer.exit_time,
        exit_reason=observer.exit_reason,
        KA_slope_min=slope.slope_min,
        KA_scaled_slope=slope.scaled_slope,
        b=b,
        b_over_2n=b / (2 * icfg.n),
        tube_distance=tube,
        eps_h1=eps_h1,
        growth=growth,
        theta_fit=monotonicity.theta_fit,
        tail_slope=tail_slope,
        pointwise_slope=pointwise_slope,
        frame_tail_growth=frame_growth,
        C5=C5,
        rate_constant=rate_constant,
        JA_bound_c=JA_c,
        cross_ratio=cross_ratio,
        ortho_initial=ortho,
        E0=observer.E0,
        flags=flags,
        passed=bool(all(checks.values())),
        rows=observer.rows,
    )


# acceptance suite

def _timed(name, func):
    start = time.perf_counter()
    passed, details = func()
    seconds = time.perf_counter() - start
    logging.info('{}: {} ({:.1f}s)'.format(
        name, 'PASS' if passed else 'FAIL', seconds))
    return CheckResult(name, bool(passed), jsonable(details), seconds)


def _check_ground_state(lab):
    gs, report = lab.ground_state()
    details = {
        'residual': gs.residual,
        'pohozaev': gs.pohozaev,
        'energy_ratio': gs.energy / gs.grad2,
        'radial_sup_error': report['radial_sup_error'],
    }
    passed = (gs.residual < 1e-10 and abs(gs.pohozaev) < 1e-8
              and abs(details['energy_ratio']) < 1e-8
              and details['radial_sup_error'] < 1e-6)
    return passed, details


def _check_spectrum(lab):
    spec, report = lab.spectrum()
    gs = lab.gs
    grid = gs.grid
    Q = gs.Q.values
    scaling = grid.norm(apply_L(gs.LamQ, gs).values + 2 * Q) / grid.norm(2*Q)
    LQ = grid.inner(apply_L(gs.Q, gs).values, Q)
    l4 = grid.integrate(Q**4)
    details = {
        'lambda0': spec.lambda0,
        'eig_residual': spec.eig_residual,
        'second_eigenvalue': spec.second_eigenvalue,
        'scaling_identity': scaling,
        'LQ_Q': abs(LQ + 2 * l4) / (2 * l4),
        'sigma0_est': spec.sigma0_est,
        'radial_lambda0': report['radial_lambda0'],
    }
    passed = (spec.eig_residual < 1e-8 and scaling < 1e-6
              and details['LQ_Q'] < 1e-8 and spec.sigma0_est > 0)
    return passed, details


def _final_state(u0, cfg):
    cfg = cfg._replace(snapshot_stride=cfg.n_steps, keep_snapshots=True)
    return evolve(u0, cfg).snapshots[-1]


def _check_evolution(lab, quick):
    gs = lab.gs
    grid = gs.grid
    T = 1.0 if quick else 5.0
    cfg = evolution_from_config(lab.config, dt=1e-3, T=T)
    traj = evolve(gs.Q, cfg._replace(snapshot_stride=cfg.n_steps))
    u = traj.snapshots[-1]
    exact = grid.ifft(grid.fft(gs.Q.values) * np.exp(-1j * grid.K1 * T))
    mass_drift, energy_drift = conservation_drift(traj)
    finals = [_final_state(gs.Q, cfg._replace(dt=dt, T=1.0)).values
              for dt in (0.01, 0.005, 0.0025)]
    coarse = np.abs(finals[0] - finals[1]).max()
    fine = np.abs(finals[1] - finals[2]).max()
    ratio = coarse / fine if fine else float('inf')
    details = {
        'mass_drift': mass_drift,
        'energy_drift': energy_drift,
        'profile_error': float(np.abs(u.values - exact).max()),
        'halving_ratio': ratio,
    }
    passed = (mass_drift < 1e-8 and energy_drift < 1e-6
              and details['profile_error'] < 1e-4 and 10 <= ratio <= 24)
    return passed, details


def _check_modulation(report, E0):
    rows = [r for r in report.rows if r.get('decomposed')]
    column = lambda key: np.array([r[key] for r in rows])
    M0 = column('mass_relation')
    energy_gap = np.abs(column('energy_Q_eps') - column('energy_scaled'))
    lam_err, x_err = rate_agreement(rows)
    details = {
        'ortho_rel': float(column('ortho_rel').max()),
        'mass_relation_drift': float(np.abs(M0 - M0[0]).max() / abs(M0[0])),
        'energy_relation': float(energy_gap.max() / abs(E0)),
        'lam_rate_error': lam_err,
        'x_rate_error': x_err,
    }
    passed = (details['ortho_rel'] < 1e-9
              and details['mass_relation_drift'] < 1e-6
              and details['energy_relation'] < 1e-5
              and lam_err < 1e-3 and x_err < 1e-3)
    return passed, details


def _check_virial(lab, run_dir, reports):
    audits = lab.audit_virial(run_dir, (4.0, 8.0, 16.0))
    fits = [a.C_fit for a in audits]
    scaled = [r.KA_scaled_slope for r in reports]
    monotone = all(r.KA_slope_min > 0 for r in reports)
    above = all(r.KA_slope_min >= r.b_over_2n for r in reports)
    spread = max(scaled) / min(scaled) if min(scaled) > 0 else float('inf')
    details = {
        'C_fit': dict(zip(('4', '8', '16'), fits)),
        'scaled_slopes': {str(r.n): s for r, s in zip(reports, scaled)},
        'slope_min': {str(r.n): r.KA_slope_min for r in reports},
        'b_over_2n': {str(r.n): r.b_over_2n for r in reports},
        'scaled_spread': spread,
    }
    stable = np.all(np.isfinite(fits)) and max(fits) <= 10 * max(min(fits),
                                                                 1e-300)
    return bool(stable and monotone and above and spread <= 3), details


def _spread(values):
    values = [v for v in values if v is not None]
    if not values or not np.all(np.isfinite(values)) or min(values) <= 0:
        return float('inf')
    return max(values) / min(values)


def _check_control(reports):
    C5 = {str(r.n): r.C5 for r in reports}
    rate = {str(r.n): r.rate_constant for r in reports}
    details = {
        'C5': C5,
        'C5_spread': _spread(C5.values()),
        'rate_constant': rate,
        'rate_spread': _spread(rate.values()),
        'JA_bound_c': {str(r.n): r.JA_bound_c for r in reports},
        'cross_ratio': {str(r.n): r.cross_ratio for r in reports},
    }
    passed = details['C5_spread'] <= 10 and details['rate_spread'] <= 10
    return passed, details


def _check_monotonicity(report, M):
    bound = -1 / (2 * M) + 0.1
    details = {
        'theta_fit': report.theta_fit,
        'tail_slope': report.tail_slope,
        'tail_bound': bound,
    }
    passed = (np.isfinite(report.theta_fit) and report.tail_slope is not None
              and report.tail_slope <= bound)
    return passed, details


def _check_kernel(lab, quick):
    params = None
    if quick:
        # upper half of the lambda range (log scale), same sample density
        k = lab.config['kernel']
        params = {'kernel': {
            'lam_min': math.sqrt(k['lam_min'] * k['lam_max']),
            'n_samples': max(8, k['n_samples'] // 2)}}
    results = lab.kernel(('fs', 'dfs'), params)
    fact = results['factorization']
    fits = results['fs'] + results['dfs']
    details = {
        'factorization_error': fact.max_rel_error,
        'self_similarity': fact.self_similarity,
        'slopes': {'{} {}'.format(f.law.kernel, f.law.region): f.slope
                   for f in fits},
    }
    return fact.passed and all(f.passed for f in fits), details


def _check_linear(lab):
    report = lab.kernel(('linear',))['linear']
    return report.passed, report._asdict()


def _check_duhamel(lab):
    report = lab.kernel(('duhamel',))['duhamel']
    details = report._asdict()
    details['hypotheses'] = report.hypotheses._asdict()
    return report.passed, details


@traced
def acceptance(lab, quick=False, run_root=None):
    """
    Run the acceptance suite and return one CheckResult per criterion.

    With ``quick`` the evolutions are shortened and only n = 30 is
    swept.
    """
    run_root = run_root or os.path.join(lab.directory, 'acceptance')
    results = []

    results.append(_timed('ground-state', lambda: _check_ground_state(lab)))
    results.append(_timed('spectrum', lambda: _check_spectrum(lab)))
    results.append(_timed('evolution', lambda: _check_evolution(lab, quick)))

    c = lab.config['instability']
    T_max = 20.0 if quick else c['T_max']
    sweep = [c['n']] if quick else sorted({20, c['n'], 40, 80})
    reports = {}
    for n in sweep:
        icfg = lab.instability_config(n, T_max=T_max, label='n{}'.format(n))
        run_dir = os.path.join(run_root, 'n{}'.format(n))
        reports[n] = run_instability(lab, icfg, run_dir)
    main = reports[c['n']]
    E0 = main.E0

    results.append(_timed('modulation', lambda: _check_modulation(main, E0)))
    main_dir = os.path.join(run_root, 'n{}'.format(c['n']))
    results.append(_timed('virial', lambda: _check_virial(
        lab, main_dir, [reports[n] for n in sweep])))
    results.append(_timed('control', lambda: _check_control(
        [reports[n] for n in sweep])))
    results.append(_timed('monotonicity', lambda: _check_monotonicity(
        main, lab.config['monotonicity']['M'])))
    results.append(_timed('kernel', lambda: _check_kernel(lab, quick)))
    results.append(_timed('linear-decay', lambda: _check_linear(lab)))
    results.append(_timed('duhamel', lambda: _check_duhamel(lab)))

    def instability():
        control = run_instability(
            lab, lab.instability_config(None, T_max=T_max, label='control'))
        details = {
            'exit_time': main.exit_time,
            'exit_reason': main.exit_reason,
            'growth': main.growth,
            'flags': main.flags,
            'control_exit': control.exit_reason,
            'control_flags': control.flags,
        }
        return main.passed and control.passed, details
    results.append(_timed('instability', instability))
    return results

