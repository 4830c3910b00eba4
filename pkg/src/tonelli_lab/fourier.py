"""Uniform grids on T^n and spectral operations on sampled functions.

A sampled function is an array whose first ``n`` axes index the grid
(row-major order, first angle slowest); any trailing axes are components.
"""

import numpy as np


def grid_axes(grid, n):
    return [np.arange(grid) / grid for _ in range(n)]


def grid_points(grid, n):
    """Grid nodes in row-major order, shape (grid**n, n)."""
    mesh = np.meshgrid(*grid_axes(grid, n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def to_grid(values, grid, n):
    """Reshape (grid**n, ...) row-major samples to grid layout."""
    values = np.asarray(values)
    return values.reshape((grid,) * n + values.shape[1:])


def wavenumbers(grid):
    """Integer frequencies in FFT order."""
    return np.fft.fftfreq(grid, 1.0 / grid)


def _axes(n):
    return tuple(range(n))


def coefficients(values, n):
    return np.fft.fftn(values, axes=_axes(n)) / np.prod(values.shape[:n])


def derivative(values, n, axis):
    """Spectral derivative along grid axis ``axis`` (angles in turns).

    The Nyquist mode is dropped for even grids so real data stays real.
    """
    grid = values.shape[axis]
    k = wavenumbers(grid)
    if grid % 2 == 0:
        k[grid // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = grid
    coef = np.fft.fftn(values, axes=_axes(n))
    out = np.fft.ifftn(2j * np.pi * k.reshape(shape) * coef, axes=_axes(n))
    return out.real if np.isrealobj(values) else out


def gradient(values, n):
    """Stack of spectral derivatives along all angles; new last axis."""
    return np.stack([derivative(values, n, a) for a in range(n)], axis=-1)


def _phase_basis(values, n, points):
    basis = []
    for a in range(n):
        g = values.shape[a]
        b = np.exp(2j * np.pi * points[:, a, None] * wavenumbers(g)[None, :])
        if g % 2 == 0:
            # real part of the Nyquist mode, as for the spectral derivative
            b[:, g // 2] = np.cos(np.pi * g * points[:, a])
        basis.append(b)
    return basis


def shift(values, n, omega):
    """Samples of f(theta + omega) from samples of f, exact for band-limited f."""
    omega = np.atleast_1d(np.asarray(omega, float))
    coef = np.fft.fftn(values, axes=_axes(n))
    phase = np.ones(values.shape[:n], complex)
    for a in range(n):
        shape = [1] * n
        shape[a] = values.shape[a]
        phase = phase * np.exp(2j * np.pi * wavenumbers(values.shape[a]) * omega[a]).reshape(shape)
    phase = phase.reshape(phase.shape + (1,) * (values.ndim - n))
    out = np.fft.ifftn(coef * phase, axes=_axes(n))
    return out.real if np.isrealobj(values) else out


_LETTERS = "abcdefgh"


def evaluate(values, n, points):
    """Trigonometric interpolant of grid samples at arbitrary points (P, n)."""
    points = np.atleast_2d(np.asarray(points, float))
    coef = coefficients(values, n)
    basis = _phase_basis(values, n, points)
    idx = _LETTERS[:n]
    spec = ",".join("p" + c for c in idx) + "," + idx + "...->p..."
    res = np.einsum(spec, *basis, coef, optimize=True)
    return res.real if np.isrealobj(values) else res


def mean(values, n):
    return np.mean(values, axis=_axes(n))
