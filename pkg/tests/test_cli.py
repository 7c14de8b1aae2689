import json
import logging
import os

import pytest

from zk_lab.artifacts import SERIES_FILE, load_diagnostics
from zk_lab.cli import main
from zk_lab.config import config_hash, defaults_text, load_config
from zk_lab.spectral_grid import load_field
from zk_lab.util import read_ndjson


SMALL_GRID = '[grid]\nL1 = 24.0\nL2 = 24.0\nN1 = 128\nN2 = 128\n'


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_missing_artifact_exit_code(workdir, caplog):
    with caplog.at_level(logging.ERROR):
        assert main(['--dir', str(workdir), 'spectrum']) == 2
    assert 'zk ground-state' in caplog.text


def test_print_defaults(workdir, capsys):
    assert main(['config', '--defaults']) == 0
    assert capsys.readouterr().out == defaults_text()


def test_print_effective_config(workdir, capsys):
    path = workdir / 'zk.toml'
    path.write_text(SMALL_GRID)
    assert main(['--config', str(path), 'config']) == 0
    printed = load_config(text=capsys.readouterr().out)
    assert config_hash(printed) == config_hash(load_config(str(path)))


def test_invalid_config_exit_code(workdir):
    path = workdir / 'bad.toml'
    path.write_text('[grid]\nN1 = 255\n')
    assert main(['--config', str(path), 'config']) == 2
    path.write_text('[grid\n')
    assert main(['--config', str(path), 'config']) == 2


def test_command_required(workdir):
    with pytest.raises(SystemExit):
        main([])


def test_ground_state_then_evolve(workdir, capsys):
    path = workdir / 'zk.toml'
    path.write_text(SMALL_GRID)
    base = ['--config', str(path), '--dir', str(workdir / 'lab'), '-q']
    assert main(base + ['ground-state']) == 0
    report = json.loads(capsys.readouterr().out)
    assert report['grid'] == [24.0, 24.0, 128, 128]
    assert os.path.exists(workdir / 'lab' / 'q.bin')

    run_dir = str(workdir / 'run')
    assert main(base + ['evolve', '--T', '0.05', '--dt', '0.01',
                        '--stride', '1', '--out', run_dir]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary['snapshots'] == 6
    assert summary['mass_drift'] < 1e-5
    rows = read_ndjson(os.path.join(run_dir, SERIES_FILE))
    assert [row['index'] for row in rows] == list(range(6))
    assert rows[-1]['t'] == pytest.approx(0.05)
    assert len(os.listdir(os.path.join(run_dir, 'snapshots'))) == 12
    with open(os.path.join(run_dir, 'run.json')) as f:
        run = json.load(f)
    assert run['init'] == 'builtin:soliton'
    assert run['config_hash'] == report['config_hash']



def test_pipeline_flags(workdir, capsys):
    path = workdir / 'zk.toml'
    path.write_text(SMALL_GRID + '[spectrum]\nn_samples = 100\n')
    base = ['--config', str(path), '--dir', str(workdir / 'lab'), '-q']
    q_copy = str(workdir / 'q_copy.bin')
    assert main(base + ['ground-state', '--tol', '1e-9',
                        '--out', q_copy]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report['tol'] == 1e-9
    _, meta = load_field(q_copy)
    assert meta['p'] == 3
    assert meta['report']['tol'] == 1e-9
    assert meta['config_hash'] == report['config_hash']

    spec_out = str(workdir / 'spec_copy.json')
    assert main(base + ['spectrum', '--q', q_copy, '--out', spec_out]) == 0
    printed = json.loads(capsys.readouterr().out)
    with open(spec_out) as f:
        written = json.load(f)
    assert written['lambda0'] == pytest.approx(printed['lambda0'])
    assert written['config_hash'] == report['config_hash']

    run_dir = str(workdir / 'run')
    assert main(base + ['evolve', '--init', 'builtin:perturbed:n=30',
                        '--T', '0.05', '--dt', '0.01', '--stride', '1',
                        '--out', run_dir]) == 0
    capsys.readouterr()
    diag = str(workdir / 'diag.ndjson')
    assert main(base + ['diagnose', '--run', run_dir, '--A', '8',
                        '--M', '4', '--out', diag]) == 0
    assert json.loads(capsys.readouterr().out)['diagnostics'] == diag
    header, rows = load_diagnostics(diag)
    assert header['config_hash'] == report['config_hash']
    assert len(rows) == 6

    assert main(base + ['audit-virial', '--run', run_dir]) == 0
    fits = json.loads(capsys.readouterr().out)
    assert sorted(fits) == ['16.0', '4.0', '8.0']
    assert os.path.exists(os.path.join(run_dir, 'virial_audit.csv'))


def test_run_directory_required(workdir, caplog):
    with caplog.at_level(logging.ERROR):
        assert main(['--dir', str(workdir), 'diagnose']) == 2
    assert '--run' in caplog.text


def test_kernel_params_and_out(workdir, capsys):
    params = workdir / 'p.json'
    params.write_text(json.dumps(
        {'kernel': {'lam_min': 100.0, 'n_samples': 10000}}))
    out = str(workdir / 'report.json')
    code = main(['--dir', str(workdir), '-q', 'kernel', '--certify', 'dfs',
                 '--params', str(params), '--out', out])
    assert code in (0, 1)
    printed = json.loads(capsys.readouterr().out)
    with open(out) as f:
        written = json.load(f)
    assert written['passed'] == printed['passed']
    assert written['dfs'] == printed['dfs']
    assert len(written['config_hash']) == 64

    params.write_text(json.dumps({'kernel': {'n_samples': 2}}))
    assert main(['--dir', str(workdir), '-q', 'kernel', '--certify', 'dfs',
                 '--params', str(params)]) == 2
