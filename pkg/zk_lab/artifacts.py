"""
Files of a laboratory run directory.

    q.bin, q.json           ground state field and report
    chi0.bin, spec.json     negative eigenfunction and spectrum report
    <run>/series.ndjson     per-snapshot mass, energy, frame offset
    <run>/snapshots/u_NNNNNN.bin  snapshots (sidecar holds t and offset)
    <run>/diag.ndjson       modulation and functional rows
"""

import json
import logging
import os
from glob import glob

from .errors import ArtifactMissing
from .ground_state import build_ground_state
from .linearized import LinearizedSpectrum
from .spectral_grid import load_field, save_field
from .util import jsonable, read_ndjson, write_ndjson


__all__ = [
    'Q_FILE',
    'Q_REPORT',
    'CHI_FILE',
    'SPEC_REPORT',
    'SERIES_FILE',
    'DIAG_FILE',
    'require',
    'write_json',
    'read_json',
    'save_ground_state',
    'read_ground_state',
    'load_ground_state',
    'save_spectrum',
    'load_spectrum',
    'snapshot_path',
    'save_snapshot',
    'find_snapshots',
    'load_snapshot',
    'save_diagnostics',
    'load_diagnostics',
]


Q_FILE = 'q.bin'
Q_REPORT = 'q.json'
CHI_FILE = 'chi0.bin'
SPEC_REPORT = 'spec.json'
SERIES_FILE = 'series.ndjson'
DIAG_FILE = 'diag.ndjson'

# subcommand that produces each artifact
_producers = {
    Q_FILE: 'ground-state',
    Q_REPORT: 'ground-state',
    CHI_FILE: 'spectrum',
    SPEC_REPORT: 'spectrum',
    SERIES_FILE: 'evolve',
    DIAG_FILE: 'diagnose',
}


def require(path):
    """
    :raises ArtifactMissing: naming the producing subcommand
    """
    if not os.path.exists(path):
        raise ArtifactMissing(path, _producers.get(os.path.basename(path)))
    return path


def write_json(path, obj):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(jsonable(obj), f, sort_keys=True, indent=2,
                  allow_nan=False)
        f.write('\n')
    logging.info('wrote {}'.format(path))


def read_json(path):
    with open(require(path), encoding='utf-8') as f:
        return json.load(f)


def save_ground_state(directory, gs, report, **meta):
    os.makedirs(directory, exist_ok=True)
    save_field(os.path.join(directory, Q_FILE), gs.Q, p=gs.p, **meta)
    write_json(os.path.join(directory, Q_REPORT), dict(report, **meta))


def read_ground_state(path):
    """Rebuild a GroundState from a field file with ``p`` in its sidecar."""
    Q, meta = load_field(require(path))
    return build_ground_state(Q, meta.get('p', 3))


def load_ground_state(directory):
    """Rebuild the GroundState from ``q.bin``."""
    return read_ground_state(os.path.join(directory, Q_FILE))


_spectrum_scalars = [
    'lambda0', 'ker_res1', 'ker_res2', 'sigma0_est', 'eig_residual',
    'second_eigenvalue', 'chi0_decay_delta']


def save_spectrum(directory, spec, **meta):
    os.makedirs(directory, exist_ok=True)
    save_field(os.path.join(directory, CHI_FILE), spec.chi0,
               lambda0=spec.lambda0, **meta)
    report = {k: getattr(spec, k) for k in _spectrum_scalars}
    write_json(os.path.join(directory, SPEC_REPORT), dict(report, **meta))


def load_spectrum(directory, gs=None):
    """
    Rebuild the LinearizedSpectrum from ``chi0.bin`` and ``spec.json``.

    :raises GridMismatch: if chi0 and the ground state disagree in grid
    """
    chi0, _ = load_field(require(os.path.join(directory, CHI_FILE)))
    if gs is not None:
        gs.grid.check(chi0)
    report = read_json(os.path.join(directory, SPEC_REPORT))
    return LinearizedSpectrum(
        chi0=chi0, **{k: report.get(k) for k in _spectrum_scalars})


def snapshot_path(run_dir, index):
    return os.path.join(run_dir, 'snapshots', 'u_{:06d}.bin'.format(index))


def save_snapshot(run_dir, index, u, t, offset, **meta):
    path = snapshot_path(run_dir, index)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    save_field(path, u, index=index, t=t, offset=offset, **meta)
    return path


def find_snapshots(run_dir):
    """Paths of the snapshots in ``run_dir``, in index order."""
    paths = sorted(glob(os.path.join(run_dir, 'snapshots', 'u_*.bin')))
    if not paths:
        raise ArtifactMissing(os.path.join(run_dir, 'snapshots'), 'evolve')
    return paths


def load_snapshot(path):
    """:return: ``(t, offset, field)``"""
    u, meta = load_field(path)
    return meta['t'], meta.get('offset', 0.0), u


def save_diagnostics(path, rows, **meta):
    """
    Write diagnostic rows behind a header record that carries ``meta``
    (config hash, code version, grid).
    """
    write_ndjson(path, [dict(meta, record='header')] + list(rows))
    logging.info('wrote {}'.format(path))


def load_diagnostics(path):
    """:return: ``(header, rows)``; the header is empty for bare files"""
    records = read_ndjson(require(path))
    if records and records[0].get('record') == 'header':
        return records[0], records[1:]
    return {}, records
