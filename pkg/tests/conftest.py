import pytest

from zk_lab.artifacts import save_ground_state, save_spectrum
from zk_lab.config import load_config
from zk_lab.ground_state import solve_Q_2d, solve_radial_Q
from zk_lab.lab import Laboratory
from zk_lab.linearized import compute_spectrum
from zk_lab.spectral_grid import Grid


@pytest.fixture(scope='session')
def profile():
    return solve_radial_Q()


@pytest.fixture(scope='session')
def grid():
    return Grid(24.0, 24.0, 384, 384)


@pytest.fixture(scope='session')
def gs(grid, profile):
    return solve_Q_2d(grid, profile)


@pytest.fixture(scope='session')
def spectrum(gs):
    return compute_spectrum(gs, n_samples=100)


@pytest.fixture
def lab(tmp_path, gs, spectrum):
    """Session on the default grid with stored ground state and spectrum."""
    directory = str(tmp_path / 'artifacts')
    save_ground_state(directory, gs, {})
    save_spectrum(directory, spectrum)
    return Laboratory(load_config(), directory)
