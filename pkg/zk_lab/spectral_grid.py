"""
Periodic 2D grid with spectral differentiation, dealiasing, quadrature and
a flat binary format for fields.

The box is ``[-L1, L1) x [-L2, L2)`` sampled at ``x = -L + n dx``. Transforms
are real-to-complex (``scipy.fft.rfft2``) so the second axis of a spectrum
holds ``N2//2 + 1`` non-negative wavenumbers.

Binary layout of a field file::

    offset  type        content
    0       u32 LE      N1
    4       u32 LE      N2
    8       f32 LE      L1
    12      f32 LE      L2
    16      f64 LE      N1*N2 values, row-major (x1 slow, x2 fast)

The sidecar ``<file>.ndjson`` holds one JSON line with the exact float64
box lengths and free-form metadata (config hash, version, name).
"""

import functools
import json
import os
import struct
from collections import namedtuple

import numpy as np
import scipy.fft

from .errors import DomainError, GridMismatch, check_finite
from .util import thread_count


__all__ = [
    'Grid',
    'Field2D',
    'SpectralInterpolant',
    'derivative',
    'integrate',
    'dealias',
    'save_field',
    'load_field',
]


_HEADER = struct.Struct('<IIff')


class Grid(namedtuple('Grid', ['L1', 'L2', 'N1', 'N2'])):

    """
    Periodic rectangular grid. Immutable and hashable, so derived arrays
    are cached per grid.

    :param float L1: half-period along x1
    :param float L2: half-period along x2
    :param int N1: samples along x1 (even, >= 8)
    :param int N2: samples along x2 (even, >= 8)
    """

    __slots__ = ()

    def __new__(cls, L1, L2, N1, N2):
        L1, L2, N1, N2 = float(L1), float(L2), int(N1), int(N2)
        for n in (N1, N2):
            if n < 8 or n % 2:
                raise DomainError(
                    "sample counts must be even and >= 8, got {}".format(n))
        if not (L1 > 0 and L2 > 0):
            raise DomainError("box lengths must be positive")
        return super(Grid, cls).__new__(cls, L1, L2, N1, N2)

    @property
    def shape(self):
        return (self.N1, self.N2)

    @property
    def spectral_shape(self):
        return (self.N1, self.N2 // 2 + 1)

    @property
    def dx1(self):
        return 2 * self.L1 / self.N1

    @property
    def dx2(self):
        return 2 * self.L2 / self.N2

    @property
    def x1(self):
        return _axes(self)[0]

    @property
    def x2(self):
        return _axes(self)[1]

    @property
    def X1(self):
        return _mesh(self)[0]

    @property
    def X2(self):
        return _mesh(self)[1]

    @property
    def k1(self):
        """Full wavenumber axis, ``k1[N1-m] == -k1[m]``."""
        return _wavenumbers(self)[0]

    @property
    def k2(self):
        """Non-negative half axis of the real transform."""
        return _wavenumbers(self)[1]

    @property
    def K1(self):
        return self.k1[:, None]

    @property
    def K2(self):
        return self.k2[None, :]

    @property
    def ksq(self):
        return _ksq(self)

    @property
    def kmax1(self):
        return np.pi / self.dx1

    @property
    def kmax2(self):
        return np.pi / self.dx2

    def origin_index(self):
        """Indices of the grid point at x = (0, 0)."""
        return (self.N1 // 2, self.N2 // 2)

    # transforms

    def fft(self, values):
        return scipy.fft.rfft2(values, workers=thread_count())

    def ifft(self, spectrum):
        return scipy.fft.irfft2(spectrum, s=self.shape, workers=thread_count())

    def multiplier(self, axis, order):
        """Spectral multiplier ``(i k)^order`` broadcastable to a spectrum."""
        return _multiplier(self, axis, order)

    def diff(self, values, axis, order=1):
        """Spectral derivative of a real array."""
        return self.ifft(self.multiplier(axis, order) * self.fft(values))

    def gradient(self, values):
        h = self.fft(values)
        return (self.ifft(self.multiplier(1, 1) * h),
                self.ifft(self.multiplier(2, 1) * h))

    def laplacian(self, values):
        return self.ifft(-self.ksq * self.fft(values))

    def dealias(self, spectrum):
        return spectrum * _dealias_mask(self)

    # quadrature

    def integrate(self, values):
        """Rectangle rule, spectrally accurate for smooth periodic data."""
        return self.dx1 * self.dx2 * float(np.sum(values))

    def inner(self, a, b):
        return self.dx1 * self.dx2 * float(np.vdot(a, b).real)

    def norm(self, values):
        return np.sqrt(self.inner(values, values))

    def spectral_energy(self, spectrum, weight=None):
        """Parseval sum of a real-transform spectrum (optionally weighted)."""
        power = np.abs(spectrum)**2
        if weight is not None:
            power = power * weight
        return (self.dx1 * self.dx2 / (self.N1 * self.N2)
                * float(np.sum(power * _half_weights(self))))

    def h1_norm(self, values):
        return np.sqrt(self.spectral_energy(self.fft(values), 1 + self.ksq))

    def reflect(self, values, axis):
        """Mirror ``x_axis -> -x_axis`` on the grid (index n -> N-n)."""
        ax = axis - 1
        return np.roll(np.flip(values, ax), 1, ax)

    def check(self, *fields):
        for f in fields:
            if f.grid != self:
                raise GridMismatch("field on {} used with {}".format(
                    f.grid, self))


@functools.lru_cache(maxsize=16)
def _axes(grid):
    x1 = -grid.L1 + grid.dx1 * np.arange(grid.N1)
    x2 = -grid.L2 + grid.dx2 * np.arange(grid.N2)
    return _frozen(x1), _frozen(x2)


@functools.lru_cache(maxsize=16)
def _mesh(grid):
    X1, X2 = np.meshgrid(grid.x1, grid.x2, indexing='ij')
    return _frozen(X1), _frozen(X2)


@functools.lru_cache(maxsize=16)
def _wavenumbers(grid):
    k1 = 2 * np.pi * np.fft.fftfreq(grid.N1, d=grid.dx1)
    k2 = 2 * np.pi * np.fft.rfftfreq(grid.N2, d=grid.dx2)
    return _frozen(k1), _frozen(k2)


@functools.lru_cache(maxsize=16)
def _ksq(grid):
    return _frozen(grid.K1**2 + grid.K2**2)


@functools.lru_cache(maxsize=64)
def _multiplier(grid, axis, order):
    if axis == 1:
        k, nyquist = grid.K1, (grid.N1 // 2, slice(None))
    elif axis == 2:
        k, nyquist = grid.K2, (slice(None), grid.N2 // 2)
    else:
        raise DomainError("axis must be 1 or 2, got {!r}".format(axis))
    if order < 1:
        raise DomainError("order must be positive, got {!r}".format(order))
    m = np.broadcast_to((1j * k)**order, grid.spectral_shape).copy()
    if order % 2:
        # the Nyquist mode has no real odd derivative
        m[nyquist] = 0
    return _frozen(m)


@functools.lru_cache(maxsize=16)
def _dealias_mask(grid):
    keep1 = np.abs(grid.k1) <= 2/3 * grid.kmax1
    keep2 = np.abs(grid.k2) <= 2/3 * grid.kmax2
    return _frozen(np.outer(keep1, keep2).astype(float))


@functools.lru_cache(maxsize=16)
def _half_weights(grid):
    w = np.full(grid.spectral_shape, 2.0)
    w[:, 0] = 1
    w[:, -1] = 1
    return _frozen(w)


def _frozen(a):
    a.setflags(write=False)
    return a


class Field2D(namedtuple('Field2D', ['grid', 'values'])):

    """
    Real scalar field on a :class:`Grid`. The values are copied on
    construction and read-only afterwards.

    :raises GridMismatch: if the array shape does not match the grid
    :raises NaNDetected: if any value is not finite
    """

    __slots__ = ()

    def __new__(cls, grid, values):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise GridMismatch("values of shape {} on grid {}".format(
                values.shape, grid))
        check_finite(values)
        values.setflags(write=False)
        return super(Field2D, cls).__new__(cls, grid, values)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid, func):
        """Sample ``func(X1, X2)`` on the grid."""
        return cls(grid, func(grid.X1, grid.X2))

    def hat(self):
        return self.grid.fft(self.values)

    def l2(self):
        return self.grid.norm(self.values)

    def h1(self):
        return self.grid.h1_norm(self.values)


def derivative(f, axis, order=1):
    """
    Spectral derivative of a field.

    :param Field2D f: field
    :param int axis: 1 or 2
    :param int order: positive derivative order
    :return: derivative field, exact for band-limited input
    """
    return Field2D(f.grid, f.grid.diff(f.values, axis, order))


def integrate(f):
    """Integral of a field over the box (rectangle rule)."""
    return f.grid.integrate(f.values)


def dealias(f_hat, grid):
    """Zero all modes with ``|k_i| > (2/3) k_max`` on either axis."""
    return grid.dealias(f_hat)


class SpectralInterpolant(object):

    """
    Evaluate the trigonometric interpolant of a field (and its derivatives)
    at tensor-product points off the grid.

    The Nyquist modes are dropped so the interpolant of real data is real.
    Evaluation is a pair of matrix products with non-uniform DFT matrices,
    ``E1 @ F @ E2.T``, which is cheap for the moderate point counts of a
    resampling.
    """

    def __init__(self, f):
        grid = f.grid
        spectrum = scipy.fft.fft2(f.values, workers=thread_count())
        spectrum[grid.N1 // 2, :] = 0
        spectrum[:, grid.N2 // 2] = 0
        self.grid = grid
        self.spectrum = spectrum
        self.k1 = 2 * np.pi * np.fft.fftfreq(grid.N1, d=grid.dx1)
        self.k2 = 2 * np.pi * np.fft.fftfreq(grid.N2, d=grid.dx2)

    def matrices(self, p1, p2):
        """Non-uniform DFT matrices for the point sets along each axis."""
        g = self.grid
        E1 = np.exp(1j * np.outer(np.asarray(p1) + g.L1, self.k1)) / g.N1
        E2 = np.exp(1j * np.outer(np.asarray(p2) + g.L2, self.k2)) / g.N2
        return E1, E2

    def evaluate(self, E1, E2, d1=0, d2=0):
        F = self.spectrum
        if d1:
            F = F * ((1j * self.k1)**d1)[:, None]
        if d2:
            F = F * ((1j * self.k2)**d2)[None, :]
        return (E1 @ F @ E2.T).real

    def __call__(self, p1, p2, d1=0, d2=0):
        E1, E2 = self.matrices(p1, p2)
        return self.evaluate(E1, E2, d1, d2)


def save_field(path, f, **meta):
    """
    Write a field in the flat binary format plus its NDJSON sidecar.

    :param str path: target file
    :param Field2D f: field
    :param meta: extra JSON-serializable metadata for the sidecar
    """
    g = f.grid
    with open(path, 'wb') as fp:
        fp.write(_HEADER.pack(g.N1, g.N2, g.L1, g.L2))
        fp.write(np.ascontiguousarray(f.values, dtype='<f8').tobytes())
    sidecar = dict(meta, N1=g.N1, N2=g.N2, L1=g.L1, L2=g.L2)
    with open(path + '.ndjson', 'w', encoding='utf-8') as fp:
        fp.write(json.dumps(sidecar, sort_keys=True) + '\n')


def load_field(path):
    """
    Read a field written by :func:`save_field`.

    :return: ``(field, meta)`` where meta is the sidecar dict (empty if the
             sidecar is missing)
    """
    with open(path, 'rb') as fp:
        blob = fp.read()
    N1, N2, L1, L2 = _HEADER.unpack_from(blob)
    values = np.frombuffer(blob, dtype='<f8', offset=_HEADER.size)
    if values.size != N1 * N2:
        raise GridMismatch("{}: expected {} values, found {}".format(
            path, N1 * N2, values.size))
    meta = {}
    if os.path.exists(path + '.ndjson'):
        with open(path + '.ndjson', encoding='utf-8') as fp:
            meta = json.loads(fp.readline())
        # exact lengths from the sidecar when they match the header
        if (np.float32(meta.get('L1')) == np.float32(L1) and
                np.float32(meta.get('L2')) == np.float32(L2)):
            L1, L2 = meta['L1'], meta['L2']
    grid = Grid(L1, L2, N1, N2)
    return Field2D(grid, values.reshape(N1, N2)), meta
