"""
Typed TOML configuration.

The package defaults live in ``defaults.toml``. A user file overrides them
section by section. Every field is converted by the parser listed in
``_config_field_types``; all failures are collected and raised together.
"""

import hashlib
import json

from importlib_resources import files
from pydicti import dicti

try:
    import tomllib
except ImportError:                 # python < 3.11
    import tomli as tomllib

from .errors import ConfigInvalid
from .spectral_grid import Grid
from .util import jsonable
from .zk_evolution import EvolutionConfig, Integrator


__all__ = [
    'defaults_text',
    'load_config',
    'parse_config',
    'dump_config',
    'config_hash',
    'config_dict',
    'grid_from_config',
    'evolution_from_config',
]


# field types

def CfgStr(value):
    if not isinstance(value, str):
        raise ValueError("expected a string, got {!r}".format(value))
    return value


def CfgBool(value):
    if not isinstance(value, bool):
        raise ValueError("expected true or false, got {!r}".format(value))
    return value


def CfgInt(value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError("expected an integer, got {!r}".format(value))
    return value


def CfgFloat(value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError("expected a number, got {!r}".format(value))
    return float(value)


def CfgFloatList(value):
    if not isinstance(value, list) or not value:
        raise ValueError("expected a non-empty list, got {!r}".format(value))
    return [CfgFloat(v) for v in value]


def Positive(parse):
    def parse_positive(value):
        value = parse(value)
        if not value > 0:
            raise ValueError("must be positive, got {!r}".format(value))
        return value
    return parse_positive


def AtLeast(parse, lower):
    def parse_bounded(value):
        value = parse(value)
        if value < lower:
            raise ValueError("must be >= {}, got {!r}".format(lower, value))
        return value
    return parse_bounded


def Within(parse, lower, upper):
    def parse_range(value):
        value = parse(value)
        if not lower < value <= upper:
            raise ValueError("must lie in ({}, {}], got {!r}".format(
                lower, upper, value))
        return value
    return parse_range


def EvenSize(value):
    value = AtLeast(CfgInt, 8)(value)
    if value % 2:
        raise ValueError("must be even, got {}".format(value))
    return value


def OneOf(*names):
    def parse_choice(value):
        value = CfgStr(value)
        if value.lower() not in [n.lower() for n in names]:
            raise ValueError("expected one of {}, got {!r}".format(
                ', '.join(names), value))
        return value
    return parse_choice


_config_field_types = {
    'grid': {
        'L1':               Positive(CfgFloat),
        'L2':               Positive(CfgFloat),
        'N1':               EvenSize,
        'N2':               EvenSize,
    },
    'ground_state': {
        'tol':              Positive(CfgFloat),
        'max_iter':         Positive(CfgInt),
        'p':                AtLeast(CfgInt, 2),
    },
    'spectrum': {
        'tol':              Positive(CfgFloat),
        'n_samples':        Positive(CfgInt),
        'rng_seed':         AtLeast(CfgInt, 0),
        'anomaly_tol':      Positive(CfgFloat),
        'constraints':      OneOf('chi0', 'weinstein', 'q3'),
    },
    'evolution': {
        'dt':               Positive(CfgFloat),
        'T':                Positive(CfgFloat),
        'integrator':       OneOf(*Integrator._value_names),
        'dealias':          CfgBool,
        'snapshot_stride':  Positive(CfgInt),
        'recenter':         CfgBool,
        'tol_mass':         Positive(CfgFloat),
        'tol_energy':       Positive(CfgFloat),
    },
    'modulation': {
        'tol':              Positive(CfgFloat),
        'alpha0':           Within(CfgFloat, 0, 0.5),
    },
    'virial': {
        'A':                AtLeast(CfgFloat, 1),
    },
    'monotonicity': {
        'M':                AtLeast(CfgFloat, 4),
        'x0_list':          CfgFloatList,
        'y0_list':          CfgFloatList,
        't0_max':           Positive(CfgFloat),
    },
    'instability': {
        'n':                AtLeast(CfgInt, 5),
        'T_max':            Positive(CfgFloat),
        'dt':               Positive(CfgFloat),
        'snapshot_stride':  Positive(CfgInt),
        'growth_factor':    AtLeast(CfgFloat, 1),
        'label':            CfgStr,
    },
    'kernel': {
        'lam_min':          Positive(CfgFloat),
        'lam_max':          Positive(CfgFloat),
        'n_samples':        AtLeast(CfgInt, 8),
        'tolerance':        Positive(CfgFloat),
    },
    'linear_decay': {
        'sigma':            Within(CfgFloat, 2.75 - 1e-12, 10),
        'L1':               Positive(CfgFloat),
        'L2':               Positive(CfgFloat),
        'N1':               EvenSize,
        'N2':               EvenSize,
        'x_lo':             Positive(CfgFloat),
        'x_hi':             Positive(CfgFloat),
        'tolerance':        Positive(CfgFloat),
    },
    'duhamel': {
        'sigma':            Positive(CfgFloat),
        'nu':               AtLeast(CfgFloat, 0),
        'r':                AtLeast(CfgFloat, 0),
        'tau0':             Positive(CfgFloat),
        'tolerance':        Positive(CfgFloat),
    },
    'output': {
        'directory':        CfgStr,
    },
}


def defaults_text():
    """The packaged default TOML."""
    return files('zk_lab').joinpath('defaults.toml').read_text(
        encoding='utf-8')


def _loads(text, origin):
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigInvalid("{}: malformed TOML: {}".format(origin, e))


def parse_config(data, base=None):
    """
    Merge ``data`` (nested mappings) over ``base`` and convert every field.

    :raises ConfigInvalid: listing each offending field
    """
    errors = []
    merged = dicti()
    base = base or {}
    for section, fields in _config_field_types.items():
        merged[section] = dicti(base.get(section, {}))
    lookup = dicti({s: s for s in _config_field_types})
    for section, values in data.items():
        if section not in lookup:
            errors.append("[{}]: unknown section".format(section))
            continue
        if not isinstance(values, dict):
            errors.append("[{}]: expected a table".format(section))
            continue
        merged[lookup[section]].update(values)
    config = dicti()
    for section, types in _config_field_types.items():
        given = merged[section]
        known = dicti(types)
        for key in given:
            if key not in known:
                errors.append("{}.{}: unknown key".format(section, key))
        parsed = dicti()
        for key, parse in types.items():
            if key not in given:
                errors.append("{}.{}: missing".format(section, key))
                continue
            try:
                parsed[key] = parse(given[key])
            except ValueError as e:
                errors.append("{}.{}: {}".format(section, key, e))
        config[section] = parsed
    if not errors:
        kernel = config['kernel']
        if kernel['lam_max'] <= kernel['lam_min']:
            errors.append("kernel.lam_max: must exceed kernel.lam_min")
        decay = config['linear_decay']
        if decay['x_hi'] <= decay['x_lo']:
            errors.append("linear_decay.x_hi: must exceed linear_decay.x_lo")
    if errors:
        raise ConfigInvalid(errors)
    return config


def load_config(path=None, text=None):
    """
    Load the defaults and override them with a TOML file or string.

    :rtype: dicti of dicti
    :raises ConfigInvalid: for malformed TOML or invalid fields
    """
    defaults = _loads(defaults_text(), 'defaults.toml')
    user = {}
    if path is not None:
        with open(path, encoding='utf-8') as f:
            user = _loads(f.read(), path)
    elif text is not None:
        user = _loads(text, '<string>')
    return parse_config(user, defaults)


def _toml_value(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list):
        return '[' + ', '.join(_toml_value(v) for v in value) + ']'
    return repr(value)


def dump_config(config):
    """TOML text of a parsed configuration (round-trips through
    :func:`load_config`)."""
    lines = []
    for section, fields in config.items():
        lines.append('[{}]'.format(section))
        for key, value in fields.items():
            lines.append('{} = {}'.format(key, _toml_value(value)))
        lines.append('')
    return '\n'.join(lines)


def config_dict(config):
    """Plain nested dict of a parsed configuration."""
    return {str(s): {str(k): v for k, v in fields.items()}
            for s, fields in config.items()}


def config_hash(config):
    """SHA-256 of the canonical JSON of a configuration."""
    text = json.dumps(jsonable(config_dict(config)), sort_keys=True,
                      separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def grid_from_config(config, section='grid'):
    g = config[section]
    return Grid(g['L1'], g['L2'], g['N1'], g['N2'])


def evolution_from_config(config, **overrides):
    e = dict(config['evolution'])
    e.update(overrides)
    return EvolutionConfig(**e)
