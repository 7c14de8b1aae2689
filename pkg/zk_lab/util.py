"""
Utilities for enums, call tracing, thread limits and row-oriented IO.
"""

import csv
import functools
import json
import logging
import os

import numpy as np


__all__ = [
    'make_enum',
    'enum_value',
    'traced',
    'thread_count',
    'jsonable',
    'write_ndjson',
    'append_ndjson',
    'read_ndjson',
    'write_csv',
]


class _EnumBase(int):

    """Abstract base type for enums (missed :cvar:`_value_names`)."""

    def __repr__(self):
        return '<{}.{}: {}>'.format(
            self.__class__.__name__,
            self._value_names[int(self)],
            int(self),
        )

    def __str__(self):
        return self._value_names[int(self)]


def make_enum(name, value_names):
    """Create a simple enum type (like in C++)."""
    Enum = type(name, (_EnumBase,), {
        '_value_names': value_names,
    })
    for i, v in enumerate(value_names):
        setattr(Enum, v, Enum(i))
    return Enum


def enum_value(Enum, value):
    """
    Look up an enum member by name (case-insensitive, '-' equals '_') or
    pass through existing members.

    :raises ValueError: if the name is unknown
    """
    if isinstance(value, Enum):
        return value
    key = str(value).replace('-', '_').lower()
    for i, v in enumerate(Enum._value_names):
        if v.lower() == key:
            return Enum(i)
    raise ValueError("Unknown {}: {!r} (expected one of {})".format(
        Enum.__name__, value, ', '.join(Enum._value_names)))


def traced(func):
    """Decorator for tracing calls to public operations."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        logging.debug('{}(kwargs={})'.format(func.__name__, sorted(kwargs)))
        return func(*args, **kwargs)
    return wrapper


def thread_count():
    """Internal parallelism cap from ``ZK_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get('ZK_THREADS', '1')))
    except ValueError:
        logging.warning('Ignoring invalid ZK_THREADS={!r}'.format(
            os.environ['ZK_THREADS']))
        return 1


def jsonable(value):
    """Convert numpy scalars/arrays and tuples to plain JSON types."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def _dumps(row):
    return json.dumps(jsonable(row), sort_keys=True, allow_nan=False)


def write_ndjson(path, rows):
    """Write one JSON object per line."""
    with open(path, 'w', encoding='utf-8') as f:
        for row in rows:
            f.write(_dumps(row) + '\n')


def append_ndjson(f, row):
    f.write(_dumps(row) + '\n')
    f.flush()


def read_ndjson(path):
    with open(path, encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


def write_csv(path, rows, columns):
    """Write dict rows with a fixed column order."""
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([jsonable(row.get(c)) for c in columns])

