import pytest

from zk_lab.config import (
    config_dict, config_hash, defaults_text, dump_config,
    evolution_from_config, grid_from_config, load_config)
from zk_lab.errors import ConfigInvalid
from zk_lab.spectral_grid import Grid
from zk_lab.zk_evolution import Integrator


def test_defaults():
    config = load_config()
    assert config['grid']['N1'] == 384
    assert config['GRID']['n1'] == 384
    assert config['monotonicity']['x0_list'] == [2.0, 4.0, 8.0, 16.0]
    assert config['monotonicity']['y0_list'] == [4.0, 8.0, 12.0, 16.0]
    assert config['evolution']['dealias'] is True
    assert grid_from_config(config) == Grid(24.0, 24.0, 384, 384)
    assert '[duhamel]' in defaults_text()


def test_dump_round_trip():
    config = load_config()
    again = load_config(text=dump_config(config))
    assert config_dict(again) == config_dict(config)
    assert config_hash(again) == config_hash(config)


def test_hash_tracks_changes():
    base = load_config()
    changed = load_config(text='[evolution]\ndt = 0.005\n')
    assert changed['evolution']['dt'] == 0.005
    assert changed['grid']['N1'] == base['grid']['N1']
    assert config_hash(changed) != config_hash(base)


def test_load_from_file(tmp_path):
    path = tmp_path / 'zk.toml'
    path.write_text('[grid]\nN1 = 256\nN2 = 256\n')
    config = load_config(str(path))
    assert grid_from_config(config) == Grid(24.0, 24.0, 256, 256)


def test_case_insensitive_sections():
    config = load_config(text='[GRID]\nn1 = 256\n')
    assert config['grid']['N1'] == 256


def test_malformed_toml():
    with pytest.raises(ConfigInvalid) as info:
        load_config(text='[grid\nL1 = ')
    assert 'malformed TOML' in str(info.value)


@pytest.mark.parametrize('text, message', [
    ('[grid]\nfoo = 1\n', 'grid.foo: unknown key'),
    ('[nope]\na = 1\n', '[nope]: unknown section'),
    ('grid = 1\n', '[grid]: expected a table'),
    ('[grid]\nN1 = 255\n', 'grid.N1: must be even'),
    ('[grid]\nN1 = 256.0\n', 'grid.N1: expected an integer'),
    ('[evolution]\ndealias = 1\n', 'evolution.dealias: expected true'),
    ('[evolution]\nintegrator = "RK45"\n', 'evolution.integrator'),
    ('[modulation]\nalpha0 = 0.7\n', 'modulation.alpha0: must lie in'),
    ('[monotonicity]\nM = 2.0\n', 'monotonicity.M: must be >= 4'),
    ('[monotonicity]\nx0_list = []\n', 'monotonicity.x0_list'),
    ('[kernel]\nlam_min = 100.0\nlam_max = 50.0\n',
     'kernel.lam_max: must exceed'),
])
def test_invalid_fields(text, message):
    with pytest.raises(ConfigInvalid) as info:
        load_config(text=text)
    assert any(message in error for error in info.value.errors)


def test_errors_are_collected():
    with pytest.raises(ConfigInvalid) as info:
        load_config(text='[grid]\nL1 = -1.0\nN2 = "x"\n')
    assert len(info.value.errors) == 2


def test_evolution_settings():
    config = load_config()
    cfg = evolution_from_config(config, T=1.0, recenter=True)
    assert cfg.T == 1.0
    assert cfg.recenter
    assert cfg.dt == config['evolution']['dt']
    assert cfg.integrator == Integrator.ETDRK4
