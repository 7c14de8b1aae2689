"""
Exceptions raised by the laboratory and their command line exit codes.
"""

import numpy as np


__all__ = [
    'ZKError',
    'NonConvergence',
    'GridTooSmall',
    'GridMismatch',
    'SpectralAnomaly',
    'NaNDetected',
    'NoPeak',
    'NewtonDiverged',
    'ParityViolation',
    'DegenerateSystem',
    'DomainError',
    'InsufficientSamples',
    'BoxTooSmall',
    'ArtifactMissing',
    'ConfigInvalid',
    'HypothesisViolated',
    'check_finite',
    'exit_code',
    'EXIT_PASS',
    'EXIT_FAIL',
    'EXIT_ERROR',
]


EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2


class ZKError(RuntimeError):
    """Base class for all errors raised by zk_lab."""


class NonConvergence(ZKError):
    """An iterative solver exhausted its iteration budget."""


class GridTooSmall(ZKError):
    """The periodic box truncates a field above the working tolerance."""


class GridMismatch(ZKError):
    """Two fields that must share a grid live on different grids."""


class SpectralAnomaly(ZKError):
    """The discrete spectrum contradicts the known structure of L."""


class NaNDetected(ZKError):

    """Non-finite values appeared in a field."""

    def __init__(self, message, time=None):
        if time is not None:
            message = '{} (t = {:.6g})'.format(message, time)
        super(NaNDetected, self).__init__(message)
        self.time = time


class NoPeak(ZKError):
    """No soliton-like peak was found in the field."""


class NewtonDiverged(ZKError):
    """The modulation Newton iteration left its basin."""


class ParityViolation(ZKError):
    """A field expected to be even in x2 is not."""


class DegenerateSystem(ZKError):
    """The linear system for the modulation rates is near singular."""


class DomainError(ZKError, ValueError):
    """Argument outside the domain of a function."""


class InsufficientSamples(ZKError):
    """Not enough samples for a regression."""


class BoxTooSmall(ZKError):
    """Fit windows reach the boundary of the periodic box."""


class ArtifactMissing(ZKError):

    """A prerequisite artifact file does not exist."""

    def __init__(self, path, command=None):
        message = 'missing artifact {!r}'.format(str(path))
        if command:
            message += '; run `zk {}` first'.format(command)
        super(ArtifactMissing, self).__init__(message)
        self.path = path
        self.command = command


class ConfigInvalid(ZKError):

    """Configuration failed validation; ``errors`` lists each bad field."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super(ConfigInvalid, self).__init__(
            'invalid configuration:\n  ' + '\n  '.join(self.errors))


class HypothesisViolated(UserWarning):
    """A hypothesis of an estimate does not hold for the given parameters."""


def check_finite(values, time=None, what='field'):
    """
    Check an array for NaN or infinite entries.

    :param values: array to check
    :param float time: simulation time attached to the error, if any
    :raises NaNDetected: if any entry is not finite
    """
    if not np.all(np.isfinite(values)):
        raise NaNDetected('non-finite values in {}'.format(what), time)


# Errors that mean "the experiment ran but its criteria are unmet" rather
# than "the program could not run":
_exit_codes = [
    (NewtonDiverged, EXIT_FAIL),
    (SpectralAnomaly, EXIT_FAIL),
    (ZKError, EXIT_ERROR),
]


def exit_code(exc):
    """Map an exception to a command line exit code."""
    for cls, code in _exit_codes:
        if isinstance(exc, cls):
            return code
    return EXIT_ERROR
