import csv
import os

import numpy as np
import pytest

from zk_lab.artifacts import DIAG_FILE, load_diagnostics, read_json
from zk_lab.config import evolution_from_config
from zk_lab.errors import (
    ArtifactMissing, ConfigInvalid, DomainError, GridMismatch)
from zk_lab.lab import (
    InstabilityConfig, Laboratory, perturbation, rate_agreement,
    run_instability)
from zk_lab.spectral_grid import Field2D, Grid, save_field


def short_run(lab):
    return evolution_from_config(lab.config, T=0.2, dt=0.005,
                                 snapshot_stride=10)


def test_meta(lab):
    meta = lab.meta()
    assert meta['grid'] == [24.0, 24.0, 384, 384]
    assert len(meta['config_hash']) == 64
    assert lab.export_settings()['config']['grid']['N1'] == 384


def test_missing_artifacts(tmp_path):
    lab = Laboratory(directory=str(tmp_path))
    with pytest.raises(ArtifactMissing) as info:
        lab.gs
    assert info.value.command == 'ground-state'


def test_grid_mismatch(lab):
    lab.config['grid']['N1'] = 256
    other = Laboratory(lab.config, lab.directory)
    with pytest.raises(GridMismatch):
        other.gs


def test_perturbation(gs, spectrum):
    u0, a, residuals = perturbation(gs, spectrum, 20)
    assert max(residuals) < 1e-9
    grid = gs.grid
    chi = spectrum.chi0.values
    assert a == pytest.approx(-grid.inner(chi, gs.Q.values), rel=1e-12)
    eps0 = (u0.values - gs.Q.values) * 20
    assert grid.inner(eps0, gs.Q.values) > 0


def test_initial_data(lab, gs, spectrum, tmp_path):
    np.testing.assert_array_equal(
        lab.initial_data('builtin:soliton').values, gs.Q.values)
    u0 = lab.initial_data('builtin:perturbed:n=30')
    eps0 = u0.values - gs.Q.values
    grid = gs.grid
    for c in (spectrum.chi0.values, gs.Qy1.values, gs.Qy2.values):
        assert abs(grid.inner(eps0, c)) < 1e-9 * grid.norm(eps0) * grid.norm(c)
    with pytest.raises(DomainError):
        lab.initial_data('builtin:nothing')
    with pytest.raises(ArtifactMissing):
        lab.initial_data(str(tmp_path / 'missing.bin'))
    other = str(tmp_path / 'other.bin')
    save_field(other, Field2D.zeros(Grid(8.0, 8.0, 32, 32)))
    with pytest.raises(GridMismatch):
        lab.initial_data(other)
    path = str(tmp_path / 'u0.bin')
    save_field(path, u0)
    np.testing.assert_array_equal(lab.initial_data(path).values, u0.values)


def test_instability_config(lab):
    icfg = lab.instability_config()
    assert icfg.n == 30
    assert icfg.dt == 0.002
    assert icfg.A == 8.0
    control = lab.instability_config(None, T_max=1.0)
    assert control.n is None
    assert control.a == 0.0
    assert control.T_max == 1.0
    with pytest.raises(ValueError):
        InstabilityConfig(3, 0.0)
    with pytest.raises(ValueError):
        InstabilityConfig(30, 0.0, alpha0=0.8)


def test_control_run_stays_in_tube(lab, tmp_path):
    icfg = lab.instability_config(None, T_max=0.2, dt=0.005,
                                  snapshot_stride=10, label='control')
    run_dir = str(tmp_path / 'control')
    report = run_instability(lab, icfg, run_dir)
    assert report.passed
    assert report.flags == []
    assert report.exit_reason is None
    assert len(report.rows) == 5
    assert np.all(report.tube_distance < 1e-6)
    assert os.path.exists(os.path.join(run_dir, DIAG_FILE))
    assert read_json(os.path.join(run_dir, 'run.json'))['label'] == 'control'


def test_diagnose_perturbed_run(lab, tmp_path):
    run_dir = str(tmp_path / 'perturbed')
    lab.evolve(lab.perturbed(30), run_dir, short_run(lab), n=30)
    series, slope, monotonicity = lab.diagnose(run_dir)
    assert len(series.s) == 5
    assert np.all(np.diff(series.s) > 0)
    assert series.n == 30
    assert slope.predicted == pytest.approx(2 * series.b / 30)
    assert monotonicity.theta_fit >= 0
    assert np.all(np.isfinite(series.I))
    assert series.I[0] > 0
    header, rows = load_diagnostics(os.path.join(run_dir, DIAG_FILE))
    assert header['config_hash'] == lab.meta()['config_hash']
    assert header['version'] == lab.meta()['version']
    assert header['run'] == run_dir
    assert len(rows) == 5
    assert all(len(row['JA_bounds']) == 3 for row in rows)
    assert all(row['decomposed'] for row in rows)
    assert max(row['ortho_rel'] for row in rows) < 1e-8
    assert rows[0]['lam'] == pytest.approx(1.0, abs=1e-8)
    assert rows[0]['eps_l2'] == pytest.approx(np.sqrt(series.b) / 30, rel=1e-6)
    lam_err, x_err = rate_agreement(rows)
    assert np.isfinite(lam_err) and np.isfinite(x_err)


def test_audit_virial(lab, tmp_path):
    run_dir = str(tmp_path / 'audit')
    lab.evolve(lab.perturbed(30), run_dir, short_run(lab), n=30)
    reports = lab.audit_virial(run_dir, (8.0, 16.0))
    assert [r.A for r in reports] == [8.0, 16.0]
    assert all(len(r.rows) == 5 for r in reports)
    assert all(np.isfinite(r.C_fit) for r in reports)
    with open(os.path.join(run_dir, 'virial_audit.csv')) as f:
        table = list(csv.DictReader(f))
    assert len(table) == 10
    assert float(table[0]['A']) == 8.0
    for row in table:
        value = lambda key: float(row[key])
        assert value('R') == pytest.approx(
            value('dJA_ds_fd') - value('scaling_term') - value('mass_term'))
        assert np.isfinite(value('R_rhs'))


def test_diagnose_out_path(lab, tmp_path):
    run_dir = str(tmp_path / 'elsewhere')
    lab.evolve(lab.perturbed(30), run_dir, short_run(lab), n=30)
    out = str(tmp_path / 'diag_copy.ndjson')
    lab.diagnose(run_dir, out=out)
    assert not os.path.exists(os.path.join(run_dir, DIAG_FILE))
    header, rows = load_diagnostics(out)
    assert header['record'] == 'header'
    assert len(rows) == 5


def test_rates_match_parameter_trajectory(lab, tmp_path):
    run_dir = str(tmp_path / 'dense')
    cfg = evolution_from_config(lab.config, T=0.1, dt=0.0025,
                                snapshot_stride=4)
    lab.evolve(lab.perturbed(30), run_dir, cfg, n=30)
    lab.diagnose(run_dir)
    _, rows = load_diagnostics(os.path.join(run_dir, DIAG_FILE))
    assert len(rows) == 11
    lam_err, x_err = rate_agreement(rows)
    assert lam_err < 1e-2
    assert x_err < 1e-2


def test_relations_and_KA_slope_on_perturbed_run(lab, tmp_path):
    run_dir = str(tmp_path / 'slope')
    cfg = evolution_from_config(lab.config, T=1.5, dt=0.01,
                                snapshot_stride=10)
    lab.evolve(lab.perturbed(30), run_dir, cfg, n=30)
    series, slope, _ = lab.diagnose(run_dir)
    assert series.s[-1] > 1
    assert slope.slope_min > 0
    assert 1 < slope.scaled_slope < 3
    _, rows = load_diagnostics(os.path.join(run_dir, DIAG_FILE))
    M0 = np.array([r['mass_relation'] for r in rows])
    assert np.abs(M0 - M0[0]).max() < 1e-6 * abs(M0[0])
    gap = max(abs(r['energy_Q_eps'] - r['energy_scaled']) for r in rows)
    assert gap < 1e-5 * abs(series.E0)


def test_perturbed_report_checks(lab, tmp_path):
    icfg = lab.instability_config(30, T_max=0.2, dt=0.005,
                                  snapshot_stride=10, label='short')
    report = run_instability(lab, icfg, str(tmp_path / 'short'))
    assert np.isfinite(report.C5) and report.C5 > 0
    assert np.isfinite(report.rate_constant)
    assert sorted(report.JA_bound_c) == [4.0, 8.0, 16.0]
    assert report.cross_ratio == 0.0
    assert report.frame_tail_growth >= 1
    assert np.isfinite(report.tail_slope)
    assert report.pointwise_slope < 0
    # no exit and no threefold growth within T = 0.2
    assert 'no-exit' in report.flags
    assert not report.passed
    known = {'KA-exit', 'KA-slope', 'no-exit', 'H1-control', 'rate-control',
             'JA-bound', 'cross-term', 'frame-tail', 'tail-decay',
             'pointwise-tail'}
    assert set(report.flags) <= known


def test_kernel_overrides(lab):
    results = lab.kernel(('dfs',), {'kernel': {'lam_min': 100.0,
                                               'n_samples': 10000}})
    assert all(fit.lam_range == (100.0, 1000.0) for fit in results['dfs'])
    assert lab.config['kernel']['lam_min'] == 10.0
    with pytest.raises(ConfigInvalid):
        lab.kernel(('dfs',), {'kernel': {'tolerance': -1}})
