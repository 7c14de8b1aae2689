import os

import numpy as np
import pytest

from zk_lab.artifacts import (
    CHI_FILE, Q_FILE, Q_REPORT, SPEC_REPORT, find_snapshots,
    load_ground_state, load_snapshot, load_spectrum, read_json, require,
    save_ground_state, save_snapshot, save_spectrum, write_json)
from zk_lab.errors import ArtifactMissing, GridMismatch
from zk_lab.ground_state import build_ground_state
from zk_lab.spectral_grid import Field2D, Grid


def test_require_names_producer(tmp_path):
    with pytest.raises(ArtifactMissing) as info:
        require(str(tmp_path / Q_FILE))
    assert info.value.command == 'ground-state'
    assert 'zk ground-state' in str(info.value)
    with pytest.raises(ArtifactMissing) as info:
        require(str(tmp_path / CHI_FILE))
    assert info.value.command == 'spectrum'
    path = tmp_path / 'present'
    path.write_text('')
    assert require(str(path)) == str(path)


def test_json_with_numpy(tmp_path):
    path = str(tmp_path / 'report.json')
    write_json(path, {'a': np.float64(1.5), 'b': np.arange(3),
                      'c': (np.int64(2), True)})
    assert read_json(path) == {'a': 1.5, 'b': [0, 1, 2], 'c': [2, True]}


def test_ground_state_round_trip(tmp_path, gs):
    directory = str(tmp_path)
    save_ground_state(directory, gs, {'mass': gs.mass}, config_hash='abc')
    report = read_json(os.path.join(directory, Q_REPORT))
    assert report['config_hash'] == 'abc'
    assert report['mass'] == pytest.approx(gs.mass)
    loaded = load_ground_state(directory)
    assert loaded.grid == gs.grid
    np.testing.assert_array_equal(loaded.Q.values, gs.Q.values)
    assert loaded.kappa == gs.kappa
    assert loaded.mass == gs.mass


def test_spectrum_round_trip(tmp_path, gs, spectrum):
    directory = str(tmp_path)
    save_spectrum(directory, spectrum, config_hash='abc')
    assert read_json(os.path.join(directory, SPEC_REPORT))['lambda0'] == \
        pytest.approx(spectrum.lambda0)
    loaded = load_spectrum(directory, gs)
    assert loaded.lambda0 == spectrum.lambda0
    np.testing.assert_array_equal(loaded.chi0.values, spectrum.chi0.values)


def test_spectrum_grid_mismatch(tmp_path, spectrum):
    save_spectrum(str(tmp_path), spectrum)
    grid = Grid(24.0, 24.0, 128, 128)
    other = build_ground_state(Field2D.from_function(
        grid, lambda x1, x2: np.exp(-x1**2 - x2**2)))
    with pytest.raises(GridMismatch):
        load_spectrum(str(tmp_path), other)


def test_snapshots(tmp_path):
    run_dir = str(tmp_path / 'run')
    with pytest.raises(ArtifactMissing) as info:
        find_snapshots(run_dir)
    assert info.value.command == 'evolve'
    grid = Grid(4.0, 4.0, 16, 16)
    for index in range(3):
        u = Field2D(grid, np.full(grid.shape, float(index)))
        save_snapshot(run_dir, index, u, t=0.5 * index, offset=index - 1.0)
    paths = find_snapshots(run_dir)
    assert [os.path.basename(p) for p in paths] == [
        'u_000000.bin', 'u_000001.bin', 'u_000002.bin']
    t, offset, u = load_snapshot(paths[2])
    assert t == 1.0
    assert offset == 1.0
    assert u.grid == grid
    assert np.all(u.values == 2.0)
