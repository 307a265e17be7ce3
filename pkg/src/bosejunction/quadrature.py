"""Fixed-grid quadrature for piecewise-linear densities.

A sampled density on a uniform grid is read as the piecewise-linear function
through its samples.  Cauchy transforms, principal values and the ``1/nu``
moments are then integrated exactly for that interpolant, so boundary values
on the real axis need no singularity subtraction and no epsilon fudge.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "grid_spacing",
    "trapezoid",
    "cauchy_on_grid",
    "cauchy_at",
    "inverse_moment",
    "bose_q",
    "bose_weighted_integral",
]

_TINY = 1e-300


def grid_spacing(grid: np.ndarray, rtol: float = 1e-9) -> float:
    """Spacing of a uniform grid; raises if the grid is not uniform."""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        raise ValueError("grid needs at least two points")
    d = np.diff(grid)
    h = (grid[-1] - grid[0]) / (grid.size - 1)
    if h <= 0 or np.max(np.abs(d - h)) > rtol * max(abs(grid[0]), abs(grid[-1]), h) + rtol * h:
        raise ValueError("grid must be uniform and increasing")
    return float(h)


def trapezoid(y, grid) -> complex | float:
    return np.trapezoid(y, grid)


def _xlogx(u):
    out = np.zeros_like(u)
    nz = u != 0
    out[nz] = u[nz] * np.log(u[nz])
    return out


def _hat(u, h):
    """``int hat(s) / (u - s) ds`` for the unit hat of half-width ``h``."""
    return (_xlogx(u + h) - 2.0 * _xlogx(u) + _xlogx(u - h)) / h


def _half_hat_right(u, h):
    # hat restricted to s in [0, h]
    with np.errstate(divide="ignore", invalid="ignore"):
        return (1.0 - u / h) * (np.log(u) - np.log(u - h)) + 1.0


def _half_hat_left(u, h):
    # hat restricted to s in [-h, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        return (1.0 + u / h) * (np.log(u + h) - np.log(u)) - 1.0


def cauchy_on_grid(grid, values, eps: float = 0.0, side: int = +1) -> np.ndarray:
    """Cauchy transform ``C(x_j) = int rho(nu) / (x_j + i*side*eps - nu) dnu``.

    ``eps = 0`` gives the boundary value from the side selected by ``side``:
    ``C(x + i0) = PV - i pi rho`` and ``C(x - i0) = PV + i pi rho``.  The
    interpolant is integrated exactly, endpoint half-cells included.
    """
    grid = np.asarray(grid, dtype=float)
    rho = np.asarray(values)
    h = grid_spacing(grid)
    n = grid.size
    shift = side * (eps if eps > 0 else _TINY)
    m = np.arange(-(n - 1), n, dtype=float)
    u = m * h + 1j * shift
    kern = _hat(u, h)
    out = fftconvolve(rho, kern, mode="full")[n - 1 : 2 * n - 1]
    # endpoint samples only carry half a hat
    uj0 = grid - grid[0] + 1j * shift
    ujn = grid - grid[-1] + 1j * shift
    out = out + rho[0] * (_half_hat_right(uj0, h) - _hat(uj0, h))
    out = out + rho[-1] * (_half_hat_left(ujn, h) - _hat(ujn, h))
    return out


def cauchy_at(grid, values, z, chunk: int = 256) -> np.ndarray:
    """Cauchy transform of the interpolant at arbitrary complex points ``z``.

    Points on the real axis inside the support are taken as ``x + i0``.
    """
    grid = np.asarray(grid, dtype=float)
    rho = np.asarray(values)
    h = grid_spacing(grid)
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    z = np.where(z.imag == 0, z + 1j * _TINY, z)
    out = np.empty(z.shape, dtype=complex)
    w = rho.astype(complex)
    for s in range(0, z.size, chunk):
        zz = z.ravel()[s : s + chunk, None]
        u = zz - grid[None, :]
        k = _hat(u, h)
        k[:, 0] = _half_hat_right(u[:, 0], h)
        k[:, -1] = _half_hat_left(u[:, -1], h)
        out.ravel()[s : s + chunk] = k @ w
    return out


def inverse_moment(grid, values, a: float = 0.0) -> float:
    """``int w(nu) / (nu - a) dnu`` for the interpolant, with ``a <= grid[0]``.

    Returns ``inf`` (with the sign of ``w``) when ``a`` coincides with the first
    grid point and ``w`` does not vanish there: the integral diverges
    logarithmically.
    """
    grid = np.asarray(grid, dtype=float)
    w = np.asarray(values, dtype=float)
    if a > grid[0]:
        raise ValueError("pole must lie at or below the grid")
    lo, hi = grid[:-1], grid[1:]
    slope = (w[1:] - w[:-1]) / (hi - lo)
    coef = w[:-1] + slope * (a - lo)
    terms = slope * (hi - lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log1p((hi - lo) / (lo - a))
    pole_cell = lo - a == 0
    if np.any(pole_cell):
        if np.any(coef[pole_cell] != 0):
            return math.copysign(math.inf, float(coef[pole_cell][0]))
        logs = np.where(pole_cell, 0.0, logs)
    return math.fsum(terms + coef * logs)


def bose_q(x) -> np.ndarray:
    """``q(x) = 1/(e^x - 1) - 1/x`` with ``q(0) = -1/2``; bounded on ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-4
    xs = x[small]
    out[small] = -0.5 + xs / 12.0 - xs**3 / 720.0
    xl = x[~small]
    out[~small] = 1.0 / np.expm1(xl) - 1.0 / xl
    return out


def bose_weighted_integral(grid, w, beta: float, mu: float) -> float:
    """``int w(nu) N(nu) dnu`` with ``N = 1/(e^{beta(nu-mu)} - 1)``.

    The pole at ``nu = mu`` is split off as ``1/(beta (nu - mu))`` and integrated
    exactly against the interpolant of ``w``; the bounded remainder goes through
    the trapezoid rule.
    """
    grid = np.asarray(grid, dtype=float)
    w = np.asarray(w, dtype=float)
    smooth = np.trapezoid(w * bose_q(beta * (grid - mu)), grid)
    return float(smooth) + inverse_moment(grid, w, mu) / beta
