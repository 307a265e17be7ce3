"""Finite-truncation dynamics oracle.

Each reservoir density is cut into ``M`` equal cells on its support; cell
``j`` becomes one mode at the cell midpoint ``nu_j`` with coupling weight
``w_j = sqrt(mass of cell j)``.  The system mode sits at index 0, so the
one-particle Hamiltonian is an arrowhead matrix

    h[0, 0] = omega,  h[j, j] = nu_j,  h[0, j] = h[j, 0] = lam w_j.

In this basis ``g_k`` is the vector of weights of reservoir ``k`` and a
profile vector ``a(h0) g_k`` has entries ``a(nu_j) w_j``.  Exact evolution
``e^{ith} f`` is compared against the analytic boundary-value formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .ness import ConditionFailure, NessEvaluator, ProfileVector, TestVector, phi
from .quadrature import cauchy_on_grid
from .selfenergy import Verdict
from .spectral import SpectralDensity

__all__ = [
    "TruncatedModel",
    "EvolutionResult",
    "ContourResidual",
    "build_truncation",
    "evolve_matrix",
    "evolve_analytic",
    "contour_identity_check",
    "quench_covariance",
    "cdf_gap",
]

DENSE_LIMIT = 1500


@dataclass(frozen=True, eq=False)
class TruncatedModel:
    """Arrowhead Hamiltonian of the system mode and ``M_k`` modes per reservoir."""

    omega: float
    lam: float
    h_matrix: sp.csr_matrix
    energies: tuple  # per reservoir, mode energies
    weights: tuple  # per reservoir, coupling weights w_j
    edges: tuple  # per reservoir, cell edges
    mode_map: tuple  # per reservoir, slice of matrix indices

    @property
    def size(self) -> int:
        return self.h_matrix.shape[0]

    @property
    def n_reservoirs(self) -> int:
        return len(self.energies)

    def hermitian_defect(self) -> float:
        d = self.h_matrix - self.h_matrix.conj().T
        return float(abs(d).max()) if d.nnz else 0.0

    def discrete_mass(self, k: int) -> float:
        return math.fsum(self.weights[k] ** 2)

    def recurrence_time(self) -> float:
        """``2 pi / min mode spacing``; evolution is meaningful well below it."""
        return min(2 * math.pi / float(np.min(np.diff(e))) for e in self.energies if e.size > 1)

    def vector(self, f: TestVector) -> np.ndarray:
        """``f`` in the mode basis; reservoir parts must be profile vectors."""
        out = np.zeros(self.size, dtype=complex)
        out[0] = complex(f.c)
        for k in range(self.n_reservoirs):
            out[self.mode_map[k]] = self._profile(f.component(k), k)
        return out

    def probe(self, components) -> np.ndarray:
        """Reservoir-only vector from per-reservoir profiles."""
        return self.vector(TestVector(0.0, tuple(components)))

    def _profile(self, vec, k):
        if vec is None:
            return 0.0
        if not isinstance(vec, ProfileVector):
            raise TypeError("the truncation represents profile vectors a(h0) g only")
        return vec(self.energies[k]) * self.weights[k]


def _cell_masses(rho: SpectralDensity, edges: np.ndarray) -> np.ndarray:
    """Exact integrals of the piecewise-linear density over consecutive cells."""
    g, v = rho.grid, rho.values
    h = rho.spacing
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * h)])
    pos = np.clip((edges - g[0]) / h, 0.0, g.size - 1)
    i = np.minimum(np.floor(pos).astype(np.int64), g.size - 2)
    fr = pos - i
    r0, r1 = v[i], v[i + 1]
    F = cum[i] + h * (r0 * fr + 0.5 * (r1 - r0) * fr**2)
    return np.clip(np.diff(F), 0.0, None)


def build_truncation(ev: NessEvaluator, modes_per_reservoir: int) -> TruncatedModel:
    """Midpoint discretization of every reservoir density held by ``ev``."""
    M = int(modes_per_reservoir)
    if M < 2:
        raise ValueError("need at least two modes per reservoir")
    if not ev.densities:
        raise ValueError("density missing")
    energies, weights, edges_all, maps = [], [], [], []
    start = 1
    for rho in ev.densities:
        lo, hi = rho.support
        lo = max(lo, 0.0)
        if hi <= lo:
            raise ValueError("density missing or identically zero")
        edges = np.linspace(lo, hi, M + 1)
        energies.append(0.5 * (edges[1:] + edges[:-1]))
        weights.append(np.sqrt(_cell_masses(rho, edges)))
        edges_all.append(edges)
        maps.append(slice(start, start + M))
        start += M
    n = start
    lam = ev.lam
    diag = np.concatenate([[ev.model.system.omega], *energies])
    w = lam * np.concatenate(weights)
    rows = np.concatenate([np.arange(n), np.zeros(n - 1, dtype=int), np.arange(1, n)])
    cols = np.concatenate([np.arange(n), np.arange(1, n), np.zeros(n - 1, dtype=int)])
    vals = np.concatenate([diag, w, w])
    h = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return TruncatedModel(
        ev.model.system.omega, lam, h, tuple(energies), tuple(weights), tuple(edges_all), tuple(maps)
    )


def cdf_gap(tm: TruncatedModel, rho: SpectralDensity, k: int) -> float:
    """L1 distance between the cumulative discrete and continuous densities of reservoir ``k``."""
    grid = rho.grid
    cont = np.concatenate([[0.0], np.cumsum(0.5 * (rho.values[1:] + rho.values[:-1]) * rho.spacing)])
    idx = np.searchsorted(tm.energies[k], grid, side="right")
    disc = np.concatenate([[0.0], np.cumsum(tm.weights[k] ** 2)])[idx]
    return float(np.trapezoid(np.abs(disc - cont), grid))


@dataclass(frozen=True, eq=False)
class EvolutionResult:
    t: np.ndarray
    c_of_t: np.ndarray
    overlaps: dict = field(default_factory=dict)
    states: np.ndarray | None = None
    norm_drift: float = 0.0


def _uniform(t: np.ndarray) -> bool:
    if t.size < 3:
        return True
    d = np.diff(t)
    return bool(np.all(np.abs(d - d[0]) <= 1e-12 * max(abs(t[-1]), 1.0)))


def evolve_matrix(tm: TruncatedModel, f, t, probes: dict | None = None) -> EvolutionResult:
    """``e^{ith} f`` at the times ``t``.

    Small matrices use a dense eigendecomposition; larger ones use the
    action of the matrix exponential on a uniform time grid.  ``f`` is a
    :class:`TestVector` or a vector in the mode basis.
    """
    f = tm.vector(f) if isinstance(f, TestVector) else np.asarray(f, dtype=complex)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if tm.size <= DENSE_LIMIT:
        e, V = np.linalg.eigh(tm.h_matrix.toarray())
        coef = V.T @ f
        states = (np.exp(1j * np.outer(t, e)) * coef) @ V.T
    elif _uniform(t):
        A = (1j * tm.h_matrix).tocsc()
        if t.size == 1:
            states = expm_multiply(A * t[0], f)[None, :]
        else:
            states = expm_multiply(A, f, start=t[0], stop=t[-1], num=t.size, endpoint=True)
    else:
        A = (1j * tm.h_matrix).tocsc()
        states = np.stack([expm_multiply(A * s, f) for s in t])
    n0 = np.linalg.norm(f)
    drift = float(np.max(np.abs(np.linalg.norm(states, axis=1) - n0))) if n0 > 0 else 0.0
    ov = {}
    for name, xi in (probes or {}).items():
        xv = tm.probe(xi) if not isinstance(xi, np.ndarray) else xi
        ov[name] = states @ np.conj(xv)
    return EvolutionResult(t, states[:, 0].copy(), ov, states, drift)


def _osc_integral(grid, t, w) -> np.ndarray:
    """``int e^{i t nu} w(nu) dnu`` by the trapezoid rule for every ``t``."""
    h = grid[1] - grid[0]
    wt = np.asarray(w, dtype=complex).copy()
    wt[0] *= 0.5
    wt[-1] *= 0.5
    out = np.empty(t.size, dtype=complex)
    for s in range(0, t.size, 64):
        ph = np.exp(1j * np.outer(t[s : s + 64], grid))
        out[s : s + 64] = h * (ph @ wt)
    return out


def evolve_analytic(ev: NessEvaluator, f: TestVector, t, probes: dict | None = None) -> EvolutionResult:
    """Boundary-value formulas for ``c(t)`` and ``<xi, psi(t)>``.

    ``c(t) = lam int e^{it nu} / eta_+ d<g, E phi>`` and, for probes
    ``xi_k = b_k(h0) g_k``,
    ``<xi, psi(t)> = sum_k int e^{it nu} conj(b_k) d<g_k, E phi_k>
    + lam^2 int e^{it nu} / eta_+ K(nu) d<g, E phi>`` with
    ``K = sum_k C[conj(b_k) rho_k](nu + i0)``.
    """
    if ev.lam == 0:
        raise ConditionFailure(Verdict("B", False, 0.0, ev.model.system.omega, "degenerate"))
    if not ev.verdicts["B"].ok:
        raise ConditionFailure(ev.verdicts["B"])
    t = np.atleast_1d(np.asarray(t, dtype=float))
    grid = ev.grid
    ph = phi(ev, f)
    cross_g_phi = np.sum([p.cross for p in ph], axis=0)
    eta = ev.eta.eta_plus
    c = ev.lam * _osc_integral(grid, t, cross_g_phi / eta)
    ov = {}
    for name, comps in (probes or {}).items():
        direct = np.zeros(grid.size, dtype=complex)
        kern_density = np.zeros(grid.size, dtype=complex)
        for k, b in enumerate(comps):
            if b is None:
                continue
            if not isinstance(b, ProfileVector):
                raise TypeError("analytic probes must be profile vectors")
            bc = np.conj(b(grid))
            direct += bc * ph[k].cross
            kern_density += bc * ev.densities[k].values
        K = cauchy_on_grid(grid, kern_density, 0.0, side=+1)
        w = direct + ev.lam**2 * K * cross_g_phi / eta
        ov[name] = _osc_integral(grid, t, w)
    return EvolutionResult(t, c, ov)


@dataclass(frozen=True)
class ContourResidual:
    t: float
    status: str
    eps: tuple = ()
    lhs: tuple = ()
    rhs: complex = 0j
    residuals: tuple = ()
    extrapolated: complex = 0j
    residual: float = math.nan


def contour_identity_check(ev: NessEvaluator, t: float, eps=(1e-2, 1e-3), pad: float | None = None) -> ContourResidual:
    """Both sides of ``(1/2 pi i) oint e^{itz}/eta(z) dz = lam^2 <g, e^{ith0} |eta_-|^{-2} g>``.

    The contour runs along ``x - i eps`` left to right and back along
    ``x + i eps`` over a window padded by one support width on each side.
    The left side is extrapolated linearly in ``eps`` from the two finest
    values; the right side is a grid quadrature of the boundary data.
    """
    if ev.lam == 0:
        return ContourResidual(float(t), "degenerate")
    rho = ev.rho_g
    grid = ev.grid
    h = rho.spacing
    L = (grid[-1] - grid[0]) if pad is None else pad
    k = int(math.ceil(L / h))
    big = grid[0] + h * np.arange(-k, grid.size + k)
    vals = np.concatenate([np.zeros(k), rho.values, np.zeros(k)])
    om, lam = ev.model.system.omega, ev.lam
    lhs = []
    for e in eps:
        lo = big - 1j * e - om - lam**2 * cauchy_on_grid(big, vals, e, side=-1)
        up = big + 1j * e - om - lam**2 * cauchy_on_grid(big, vals, e, side=+1)
        integrand = np.exp(1j * t * (big - 1j * e)) / lo - np.exp(1j * t * (big + 1j * e)) / up
        lhs.append(complex(np.trapezoid(integrand, big) / (2j * math.pi)))
    rhs = complex(lam**2 * np.trapezoid(np.exp(1j * t * grid) * rho.values / np.abs(ev.eta.eta_plus) ** 2, grid))
    e1, e2 = eps[-2], eps[-1]
    l1, l2 = lhs[-2], lhs[-1]
    extrap = l2 + (l2 - l1) * e2 / (e1 - e2)
    res = tuple(abs(x - rhs) for x in lhs)
    return ContourResidual(float(t), "ok", tuple(eps), tuple(lhs), rhs, res, extrap, abs(extrap - rhs))


def quench_covariance(tm: TruncatedModel, ev: NessEvaluator, f, t, result: EvolutionResult | None = None):
    """``sum_l sum_j (N_l(nu_j) + 1/2) |psi_l(t)_j|^2`` along the matrix evolution.

    Returns ``(total, per_reservoir)`` with shapes ``(nt,)`` and ``(nt, N)``.
    """
    res = ev.model.reservoirs
    occ = []
    for k, r in enumerate(res):
        x = r.beta * (tm.energies[k] - r.mu)
        if np.any(x == 0):
            raise ValueError(f"reservoir {k}: a mode sits at the Bose pole")
        occ.append(1.0 / np.expm1(x) + 0.5)
    if result is None or result.states is None:
        result = evolve_matrix(tm, f, t)
    st = result.states
    per = np.stack([np.abs(st[:, tm.mode_map[k]]) ** 2 @ occ[k] for k in range(len(res))], axis=1)
    return per.sum(axis=1), per
