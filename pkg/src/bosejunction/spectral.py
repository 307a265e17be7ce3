"""Reservoir spectral densities and resolvent boundary values.

For a reservoir Hamiltonian ``h0 >= 0`` and a vector ``g`` the density is
``rho(nu) = d<g, E(nu) g>/dnu = (1/pi) lim Im <g, (nu - h0 - i eps)^{-1} g>``.
Three estimators are provided, one per reservoir kind:

* continuum ``R^d`` with ``h0 = |p|^2/2``: closed form through the co-area
  formula;
* lattice ``Z^d`` with ``h0 = 2d - A``: seeded quasi-Monte Carlo over the
  Brillouin zone, Gaussian broadening and Richardson extrapolation in the width;
* general graph patches: Lanczos continued fraction at Lorentzian widths
  ``4 eps0, 2 eps0, eps0`` and Richardson extrapolation.  A kernel polynomial
  estimate of the same patch is available as an independent cross-check.

All densities live on uniform grids and are read as piecewise-linear
functions by the quadrature layer.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.signal import fftconvolve
from scipy.stats import qmc

from . import graphs
from .model import (
    CombZdZ,
    ContinuumRd,
    GraphExplicit,
    LatticeZd,
    RadialContinuum,
    ReservoirSpec,
    Tabulated,
    sphere_area,
)
from .quadrature import cauchy_on_grid, grid_spacing

__all__ = [
    "SpectralDensity",
    "ResolventBoundary",
    "SpectralOptions",
    "GridTooCoarse",
    "uniform_grid",
    "density_continuum_rd",
    "cross_density_continuum_rd",
    "density_lattice_zd",
    "lattice_gram",
    "density_graph_resolvent",
    "cross_density_graph_resolvent",
    "density_kpm",
    "lanczos",
    "resolvent_boundary",
    "support_top",
    "reservoir_patch",
    "reservoir_form_factor",
    "reservoir_density",
    "reservoir_cross_density",
    "read_density_csv",
]


class GridTooCoarse(RuntimeError):
    """Raised when a grid cannot resolve the requested transform."""


def uniform_grid(top: float, n: int, bottom: float = 0.0) -> np.ndarray:
    return np.linspace(bottom, top, int(n))


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    """Sampled density ``rho`` on a uniform grid.

    ``norm_sq`` is the reference ``|g|^2`` the total mass should reproduce,
    when known.  ``method`` records the estimator.
    """

    grid: np.ndarray
    values: np.ndarray
    norm_sq: float | None = None
    method: str = ""

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.shape != v.shape or g.ndim != 1:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        grid_spacing(g)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite and nonnegative")
        if np.any(v[g < 0] != 0):
            raise ValueError("density support must lie in [0, inf)")
        object.__setattr__(self, "grid", _readonly(g))
        object.__setattr__(self, "values", _readonly(v))

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def support(self) -> tuple[float, float]:
        nz = np.nonzero(self.values)[0]
        if nz.size == 0:
            return (0.0, 0.0)
        lo = max(nz[0] - 1, 0)
        hi = min(nz[-1] + 1, self.grid.size - 1)
        return (float(self.grid[lo]), float(self.grid[hi]))

    @property
    def total_mass(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    @property
    def mass_error(self) -> float:
        """Relative deviation of the total mass from ``norm_sq``."""
        if self.norm_sq is None or self.norm_sq == 0:
            return abs(self.total_mass)
        return abs(self.total_mass - self.norm_sq) / self.norm_sq

    def on(self, grid) -> np.ndarray:
        """Linear interpolation onto ``grid``; zero outside the sampled range."""
        return np.interp(grid, self.grid, self.values, left=0.0, right=0.0)

    def resample(self, grid) -> "SpectralDensity":
        return SpectralDensity(np.asarray(grid, float), self.on(grid), self.norm_sq, self.method)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["nu", "rho"])
            for x, y in zip(self.grid, self.values):
                w.writerow([f"{x:.12g}", f"{y:.12g}"])


def read_density_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column ``nu,rho`` CSV with a header row."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["nu", "rho"]:
        raise ValueError(f"{path}: expected header 'nu,rho'")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return data[:, 0], data[:, 1]


@dataclass(frozen=True, eq=False)
class ResolventBoundary:
    """``<g, (nu - h0 - i0)^{-1} g> = real_part + i imag_part`` on a grid.

    ``bound`` is the sup of the modulus over the grid.
    """

    grid: np.ndarray
    real_part: np.ndarray
    imag_part: np.ndarray
    bound: float


def resolvent_boundary(rho: SpectralDensity, check: bool = True, rtol: float = 0.05) -> ResolventBoundary:
    """Boundary value of the resolvent matrix element from below the real axis.

    The principal value is the exact transform of the piecewise-linear
    interpolant.  With ``check`` the transform on every other grid point is
    recomputed from the half-resolution grid; a relative disagreement above
    ``rtol`` (in sup norm) raises :class:`GridTooCoarse`.
    """
    c = cauchy_on_grid(rho.grid, rho.values, 0.0, side=-1)
    real = c.real.copy()
    imag = np.pi * np.asarray(rho.values, dtype=float)
    if check and rho.grid.size >= 9 and np.any(rho.values):
        half = rho.grid.size // 2 * 2 + 1 == rho.grid.size
        if half:
            coarse = cauchy_on_grid(rho.grid[::2], rho.values[::2], 0.0, side=-1).real
            scale = max(np.max(np.abs(real)), 1e-300)
            if np.max(np.abs(coarse - real[::2])) > rtol * scale:
                raise GridTooCoarse("principal value does not resolve on this grid")
    bound = float(np.max(np.hypot(real, imag))) if real.size else 0.0
    return ResolventBoundary(_readonly(rho.grid), _readonly(real), _readonly(imag), bound)


# --------------------------------------------------------------------------
# continuum R^d


def _check_dim(d):
    if not isinstance(d, (int, np.integer)) or d < 3:
        raise ValueError(f"unsupported dimension d={d}; need d >= 3")


def cross_density_continuum_rd(d: int, g1: RadialContinuum, g2: RadialContinuum, grid) -> np.ndarray:
    """``d<g1, E g2>/dnu`` for radial profiles on R^d with ``h0 = |p|^2/2``.

    The level set ``|p|^2/2 = nu`` is the sphere of radius ``r = sqrt(2 nu)``
    and ``|grad h0| = r``, so the co-area formula gives
    ``|S^{d-1}| (2 nu)^{(d-2)/2} conj(g1(r)) g2(r)``.
    """
    _check_dim(d)
    grid = np.asarray(grid, dtype=float)
    nu = np.clip(grid, 0.0, None)
    r = np.sqrt(2.0 * nu)
    val = sphere_area(d) * (2.0 * nu) ** ((d - 2) / 2) * np.conj(g1(r)) * g2(r)
    return np.where(grid > 0, val, 0.0)


def density_continuum_rd(d: int, g: RadialContinuum, grid=None, n_grid: int = 65537) -> SpectralDensity:
    """Density of a radial form factor on R^d (closed form)."""
    _check_dim(d)
    if grid is None:
        grid = uniform_grid(0.5 * g.radius**2, n_grid)
    vals = cross_density_continuum_rd(d, g, g, grid).real
    return SpectralDensity(grid, np.clip(vals, 0.0, None), g.norm_sq(d), "continuum-coarea")


# --------------------------------------------------------------------------
# lattice Z^d


def _extended(grid, pad):
    h = grid_spacing(grid)
    k = int(math.ceil(pad / h))
    ext = grid[0] + h * np.arange(-k, grid.size + k)
    return ext, k


def lattice_gram(
    d: int,
    vectors,
    grid,
    samples: int = 1 << 22,
    seed: int = 0,
    sigma0: float = 0.03,
    chunk: int = 1 << 18,
) -> np.ndarray:
    """Matrix of cross densities ``d<u_a, E u_b>/dnu`` for vectors on Z^d.

    Returns an array of shape ``(m, m, len(grid))``.  All entries come from
    the same Brillouin-zone samples so the matrix is Hermitian at every grid
    point.  Brillouin-zone points come from a scrambled Sobol sequence
    seeded by ``seed``; ``samples`` should be a power of two.  Histograms use
    linear binning, Gaussian widths
    ``sigma0, 2 sigma0, 4 sigma0`` and the Richardson combination
    ``(64 r1 - 20 r2 + r4)/45`` which removes the ``sigma^2`` and ``sigma^4``
    bias.
    """
    _check_dim(d)
    grid = np.asarray(grid, dtype=float)
    vecs = [v.as_dict() if isinstance(v, GraphExplicit) else dict(v) for v in vectors]
    if not vecs or any(len(v) == 0 for v in vecs):
        raise ValueError("empty form factor")
    for v in vecs:
        for s in v:
            if len(s) != d:
                raise ValueError(f"site {s} is not in Z^{d}")
    m = len(vecs)
    sites = sorted({s for v in vecs for s in v})
    idx = {s: i for i, s in enumerate(sites)}
    coef = np.zeros((m, len(sites)), dtype=complex)
    for a, v in enumerate(vecs):
        for s, c in v.items():
            coef[a, idx[s]] = c
    X = np.asarray(sites, dtype=float)

    ext, k = _extended(grid, 6 * 4 * sigma0)
    h = ext[1] - ext[0]
    nb = ext.size
    hist = np.zeros((m, m, nb), dtype=complex)
    sobol = qmc.Sobol(d, scramble=True, seed=seed)
    done = 0
    while done < samples:
        c = min(chunk, samples - done)
        th = (2.0 * sobol.random(c) - 1.0) * np.pi
        e = 2.0 * d - 2.0 * np.cos(th).sum(axis=1)
        ph = np.exp(-1j * th @ X.T)
        uh = ph @ coef.T  # (c, m)
        pos = (e - ext[0]) / h
        i0 = np.floor(pos).astype(np.int64)
        fr = pos - i0
        for a in range(m):
            for b in range(a, m):
                w = np.conj(uh[:, a]) * uh[:, b]
                for ii, ww in ((i0, w * (1 - fr)), (i0 + 1, w * fr)):
                    hist[a, b] += np.bincount(ii, weights=ww.real, minlength=nb)[:nb]
                    if a != b:
                        hist[a, b] += 1j * np.bincount(ii, weights=ww.imag, minlength=nb)[:nb]
        done += c
    hist /= samples * h

    def smooth(s):
        half = int(math.ceil(6 * s / h))
        x = h * np.arange(-half, half + 1)
        ker = np.exp(-0.5 * (x / s) ** 2)
        ker /= ker.sum()
        return np.stack([fftconvolve(hist[a, b], ker, mode="same") for a in range(m) for b in range(m)]).reshape(
            m, m, nb
        )

    r1, r2, r4 = smooth(sigma0), smooth(2 * sigma0), smooth(4 * sigma0)
    out = (64 * r1 - 20 * r2 + r4) / 45.0
    out = out[:, :, k : k + grid.size]
    for a in range(m):
        for b in range(a):
            out[a, b] = np.conj(out[b, a])
    inside = (grid > 0) & (grid < 4 * d)
    out[:, :, ~inside] = 0.0
    return out


def density_lattice_zd(
    d: int,
    g: GraphExplicit,
    grid=None,
    n_grid: int = 4097,
    samples: int = 1 << 22,
    seed: int = 0,
    sigma0: float = 0.03,
) -> SpectralDensity:
    """Density of ``g`` for ``h0 = 2d - A`` on Z^d by seeded Monte Carlo."""
    _check_dim(d)
    if grid is None:
        grid = uniform_grid(4.0 * d, n_grid)
    vals = lattice_gram(d, [g], grid, samples, seed, sigma0)[0, 0].real
    return SpectralDensity(grid, np.clip(vals, 0.0, None), g.norm_sq(), "lattice-mc")


# --------------------------------------------------------------------------
# graph patches


def lanczos(matvec, v0, steps: int):
    """Plain Lanczos recursion; returns ``(alpha, beta)`` with ``beta[0] = |v0|``."""
    v = np.asarray(v0, dtype=complex)
    nrm = np.linalg.norm(v)
    alpha, beta = [], [nrm]
    if nrm == 0:
        return np.zeros(0), np.array([0.0])
    q_prev = np.zeros_like(v)
    q = v / nrm
    b = 0.0
    for _ in range(steps):
        w = matvec(q)
        a = np.vdot(q, w).real
        w = w - a * q - b * q_prev
        alpha.append(a)
        b = np.linalg.norm(w)
        if b < 1e-13 * max(abs(a), 1.0):
            break
        beta.append(b)
        q_prev, q = q, w / b
    return np.array(alpha), np.array(beta[: len(alpha)])


def _continued_fraction(alpha, beta, z):
    """``<v0, (z - H)^{-1} v0>`` from Lanczos coefficients."""
    g = np.zeros_like(z)
    for j in range(len(alpha) - 1, -1, -1):
        b2 = beta[j + 1] ** 2 if j + 1 < len(beta) else 0.0
        g = 1.0 / (z - alpha[j] - b2 * g)
    return beta[0] ** 2 * g


def _lorentz_richardson(alpha, beta, grid, eps0):
    def rho(eps):
        return -_continued_fraction(alpha, beta, grid + 1j * eps).imag / np.pi

    return (8 * rho(eps0) - 6 * rho(2 * eps0) + rho(4 * eps0)) / 3.0


def _patch_vector(patch, vec: GraphExplicit):
    v = np.zeros(patch.n_vertices, dtype=complex)
    for s, c in vec.coeffs:
        v[patch.index_of(s)] = c
    return v


def _check_margin(patch, vec: GraphExplicit, margin: int):
    for s, _ in vec.coeffs:
        if patch.depth_of(s) < margin:
            raise ValueError(f"patch too small: site {s} lies within {margin} of the boundary")


def _shifted_matvec(patch, shift):
    A = patch.adjacency.astype(complex)
    return lambda x: shift * x - A @ x


def density_graph_resolvent(
    patch,
    g: GraphExplicit,
    shift: float,
    grid,
    eps0: float = 0.03,
    steps: int = 600,
    margin: int | None = None,
) -> SpectralDensity:
    """Density of ``g`` for ``h0 = shift - A`` on a finite graph patch.

    ``(1/pi) Im <g, (nu - h0 - i eps)^{-1} g>`` is evaluated by a Lanczos
    continued fraction at ``eps = 4 eps0, 2 eps0, eps0`` and extrapolated to
    ``eps -> 0`` by Richardson.  The result is clipped to the spectral window
    ``[0, 2 shift]`` and to nonnegative values.
    """
    margin = patch.boundary_margin if margin is None else margin
    _check_margin(patch, g, margin)
    grid = np.asarray(grid, dtype=float)
    a, b = lanczos(_shifted_matvec(patch, shift), _patch_vector(patch, g), steps)
    vals = _lorentz_richardson(a, b, grid, eps0)
    vals = np.where((grid > 0) & (grid < 2 * shift), vals, 0.0)
    return SpectralDensity(grid, np.clip(vals, 0.0, None), g.norm_sq(), "lanczos-richardson")


def cross_density_graph_resolvent(
    patch, u: GraphExplicit, w: GraphExplicit, shift: float, grid, eps0=0.03, steps=600, margin=None
) -> np.ndarray:
    """``d<u, E w>/dnu`` by polarization, ``(1/4) sum_k (-i)^k rho_{u + i^k w}``."""
    margin = patch.boundary_margin if margin is None else margin
    _check_margin(patch, u, margin)
    _check_margin(patch, w, margin)
    grid = np.asarray(grid, dtype=float)
    pu, pw = _patch_vector(patch, u), _patch_vector(patch, w)
    mv = _shifted_matvec(patch, shift)
    out = np.zeros(grid.size, dtype=complex)
    for k in range(4):
        a, b = lanczos(mv, pu + (1j) ** k * pw, steps)
        out += (-1j) ** k * _lorentz_richardson(a, b, grid, eps0)
    out /= 4.0
    return np.where((grid > 0) & (grid < 2 * shift), out, 0.0)


def density_kpm(patch, g: GraphExplicit, shift: float, grid, moments: int = 1024) -> np.ndarray:
    """Kernel polynomial (Jackson) estimate of the density of ``g``.

    The spectrum of ``shift - A`` is mapped to ``[-1, 1]`` through the bound
    ``|A| <= max degree``; Chebyshev moments use the doubling identities.
    """
    grid = np.asarray(grid, dtype=float)
    A = patch.adjacency.astype(float)
    deg = float(np.max(np.asarray(A.sum(axis=1)).ravel()))
    lo, hi = shift - deg, shift + deg
    a, b = 0.5 * (hi + lo), 0.5 * (hi - lo) * 1.01
    H = (sp.identity(patch.n_vertices) * (shift - a) - A) / b
    v = _patch_vector(patch, g)
    half = moments // 2
    mu = np.zeros(2 * half)
    t0, t1 = v, H @ v
    mu[0] = np.vdot(v, v).real
    mu[1] = np.vdot(v, t1).real
    for n in range(1, half):
        mu[2 * n] = 2 * np.vdot(t1, t1).real - mu[0]
        t2 = 2 * (H @ t1) - t0
        mu[2 * n + 1] = 2 * np.vdot(t2, t1).real - mu[1]
        t0, t1 = t1, t2
    N = mu.size
    n = np.arange(N)
    jack = ((N - n + 1) * np.cos(np.pi * n / (N + 1)) + np.sin(np.pi * n / (N + 1)) / np.tan(np.pi / (N + 1))) / (N + 1)
    x = (grid - a) / b
    inside = np.abs(x) < 1
    out = np.zeros_like(grid)
    xs = x[inside]
    T = np.cos(np.outer(n, np.arccos(xs)))
    coeff = jack * mu
    coeff[1:] *= 2
    out[inside] = (coeff @ T) / (np.pi * np.sqrt(1 - xs**2) * b)
    return out


# --------------------------------------------------------------------------
# dispatch by reservoir kind


@dataclass(frozen=True)
class SpectralOptions:
    """Numerical knobs shared by the density estimators."""

    grid_points: int = 4097
    mc_samples: int = 1 << 22
    seed: int = 0
    sigma0: float = 0.03
    eps0: float = 0.03
    lanczos_steps: int = 600
    comb_base_radius: int = 2
    comb_tooth_length: int = 700
    boundary_margin: int = 3


def support_top(res: ReservoirSpec) -> float:
    """Upper end of the spectrum of ``h0`` relevant for ``res``."""
    kind = res.kind
    if isinstance(kind, ContinuumRd):
        return 0.5 * res.form_factor.radius**2
    if isinstance(kind, LatticeZd):
        return 4.0 * kind.d
    if isinstance(kind, CombZdZ):
        return 4.0 * math.sqrt(kind.d**2 + 1)
    if isinstance(kind, Tabulated):
        return float(max(kind.grid))
    raise TypeError(f"unknown reservoir kind {kind!r}")


@lru_cache(maxsize=8)
def _comb_patch(d, base_radius, tooth_length, margin):
    return graphs.comb_patch(d, base_radius, tooth_length, boundary_margin=margin)


def reservoir_patch(res: ReservoirSpec, opts: SpectralOptions):
    """Finite patch used for comb reservoirs (``None`` for other kinds)."""
    if isinstance(res.kind, CombZdZ):
        return _comb_patch(res.kind.d, opts.comb_base_radius, opts.comb_tooth_length, opts.boundary_margin)
    return None


def reservoir_form_factor(res: ReservoirSpec):
    """The form factor with ``K delta`` expanded to explicit coefficients."""
    return graphs.expand_form_factor(res.kind, res.form_factor)


def _h0_shift(kind):
    if isinstance(kind, CombZdZ):
        return graphs.comb_norm(kind.d)
    if isinstance(kind, LatticeZd):
        return 2.0 * kind.d
    raise TypeError(kind)


@lru_cache(maxsize=32)
def _cached_density(kind, form_factor, grid_key, opts: SpectralOptions) -> SpectralDensity:
    # keyed on kind and form factor only: beta, mu and phase do not enter
    grid = np.linspace(*grid_key)
    res = ReservoirSpec(kind, 1.0, 0.0, form_factor)
    if isinstance(kind, ContinuumRd):
        return density_continuum_rd(kind.d, res.form_factor, grid)
    if isinstance(kind, LatticeZd):
        g = reservoir_form_factor(res)
        return density_lattice_zd(kind.d, g, grid, samples=opts.mc_samples, seed=opts.seed, sigma0=opts.sigma0)
    if isinstance(kind, CombZdZ):
        g = reservoir_form_factor(res)
        patch = reservoir_patch(res, opts)
        return density_graph_resolvent(patch, g, _h0_shift(kind), grid, opts.eps0, opts.lanczos_steps)
    if isinstance(kind, Tabulated):
        tab_grid = np.asarray(kind.grid, dtype=float)
        tab = np.asarray(kind.values, dtype=float)
        vals = np.interp(grid, tab_grid, tab, left=0.0, right=0.0)
        return SpectralDensity(grid, vals, float(np.trapezoid(tab, tab_grid)), "tabulated")
    raise TypeError(f"unknown reservoir kind {kind!r}")


def reservoir_density(res: ReservoirSpec, grid, opts: SpectralOptions = SpectralOptions()) -> SpectralDensity:
    """Density of ``res.form_factor`` sampled on the uniform ``grid``."""
    grid = np.asarray(grid, dtype=float)
    grid_spacing(grid)
    return _cached_density(res.kind, res.form_factor, (float(grid[0]), float(grid[-1]), int(grid.size)), opts)


def reservoir_cross_density(res: ReservoirSpec, u, w, grid, opts: SpectralOptions = SpectralOptions()) -> np.ndarray:
    """``d<u, E w>/dnu`` for two vectors living in the reservoir ``res``."""
    kind = res.kind
    grid = np.asarray(grid, dtype=float)
    if isinstance(kind, ContinuumRd):
        return cross_density_continuum_rd(kind.d, u, w, grid)
    if isinstance(kind, LatticeZd):
        gram = lattice_gram(kind.d, [u, w], grid, opts.mc_samples, opts.seed, opts.sigma0)
        return gram[0, 1]
    if isinstance(kind, CombZdZ):
        patch = reservoir_patch(res, opts)
        return cross_density_graph_resolvent(patch, u, w, _h0_shift(kind), grid, opts.eps0, opts.lanczos_steps)
    raise TypeError(f"cross densities are not available for {type(kind).__name__} reservoirs")
