"""Self-energy ``eta(z)`` of the system mode and the conditions built on it.

``eta(z) = z - omega - lam^2 int rho_g(nu) / (z - nu) dnu`` where ``rho_g`` is
the aggregate coupling density.  On the real axis the boundary value from above
is ``eta_+(x) = x - omega - lam^2 PV(x) + i lam^2 pi rho_g(x)``; ``eta`` is a
Nevanlinna function, so ``Im eta_+ >= 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .quadrature import cauchy_at, cauchy_on_grid, inverse_moment
from .spectral import SpectralDensity

__all__ = [
    "EtaBoundary",
    "Verdict",
    "eta_at",
    "eta_boundary",
    "check_condition_A",
    "check_condition_B",
    "check_condition_D",
]


@dataclass(frozen=True)
class Verdict:
    """Outcome of a condition check.

    ``value`` is the quantity the check is about (``min |eta_+|``, the bound
    ``C_g`` or ``int rho/nu``); ``argmin`` is set where it makes sense.
    """

    condition: str
    ok: bool
    value: float
    argmin: float | None = None
    detail: str = ""

    def as_dict(self) -> dict:
        return {
            "condition": self.condition,
            "ok": self.ok,
            "value": self.value,
            "argmin": self.argmin,
            "detail": self.detail,
        }


@dataclass(frozen=True, eq=False)
class EtaBoundary:
    """``eta_+`` sampled on the density grid, with ``eta(0)`` and ``min |eta_+|``."""

    omega: float
    lam: float
    rho_g: SpectralDensity
    grid: np.ndarray
    eta_plus: np.ndarray
    eta_zero: float
    min_abs: float
    argmin: float

    @property
    def eta_minus(self) -> np.ndarray:
        return np.conj(self.eta_plus)

    def at(self, z):
        return eta_at(self, z)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "re", "im"])
            for x, e in zip(self.grid, self.eta_plus):
                w.writerow([f"{x:.12g}", f"{e.real:.12g}", f"{e.imag:.12g}"])


def eta_at(eb: EtaBoundary, z):
    """``eta(z)`` off the real axis, by exact quadrature of the interpolant."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag == 0):
        raise ValueError("eta_at needs Im z != 0; use eta_boundary on the real axis")
    if eb.lam == 0:
        return z - eb.omega
    c = cauchy_at(eb.rho_g.grid, eb.rho_g.values, z.ravel()).reshape(z.shape)
    return z - eb.omega - eb.lam**2 * c


def eta_boundary(omega: float, lam: float, rho_g: SpectralDensity) -> EtaBoundary:
    """Boundary values ``eta_+`` on the grid of ``rho_g`` and ``eta(0)``.

    ``eta(0) = -omega + lam^2 int rho_g / nu`` is infinite when ``rho_g(0) > 0``;
    :func:`check_condition_D` reports that case.
    """
    grid = rho_g.grid
    if lam == 0:
        eta = grid.astype(complex) - omega
        eta0 = -float(omega)
    else:
        c = cauchy_on_grid(grid, rho_g.values, 0.0, side=+1)
        real = grid - omega - lam**2 * c.real
        eta = real + 1j * (lam**2 * np.pi * rho_g.values)
        eta0 = -omega + lam**2 * _inverse_moment_from_zero(rho_g)
    a = np.abs(eta)
    j = int(np.argmin(a))
    return EtaBoundary(float(omega), float(lam), rho_g, grid, eta, float(eta0), float(a[j]), float(grid[j]))


def _inverse_moment_from_zero(rho: SpectralDensity) -> float:
    # the density vanishes on any negative part of the grid
    keep = rho.grid >= 0
    return inverse_moment(rho.grid[keep], rho.values[keep], 0.0)


# --------------------------------------------------------------------------
# conditions


def check_condition_A(
    rho: SpectralDensity, ladder: int = 6, ratio_limit: float = 0.9, rel_floor: float = 1e-6
) -> Verdict:
    """Uniform bound on ``|<g, (nu - h0 -+ i eps)^{-1} g>|``.

    The sup over the grid is evaluated along ``eps = 64 h, 32 h, ...`` (``h``
    the grid spacing) and compared with the boundary value.  For a bounded
    transform the increments shrink geometrically; when the last two ratios
    of consecutive increments both stay at or above ``ratio_limit`` the bound
    is not converging and the check fails.  A single large ratio happens when
    the location of the sup jumps, e.g. to a kink of a coarse table.
    """
    from .spectral import resolvent_boundary

    if not np.any(rho.values):
        return Verdict("A", True, 0.0, detail="zero density")
    h = rho.spacing
    eps = [64 * h / 2**j for j in range(ladder)]
    sups = [float(np.max(np.abs(cauchy_on_grid(rho.grid, rho.values, e, side=-1)))) for e in eps]
    inc = np.abs(np.diff(sups))
    bound = resolvent_boundary(rho, check=False).bound
    scale = max(sups[-1], 1e-300)
    if inc[-1] <= rel_floor * scale:
        return Verdict("A", True, bound, detail="converged")
    ratios = [float(a / b) if b > 0 else math.inf for a, b in zip(inc[-2:], inc[-3:-1])]
    ratio = ratios[-1]
    if min(ratios) >= ratio_limit:
        return Verdict("A", False, sups[-1], detail=f"sup grows under eps refinement (ratio {ratio:.3g})")
    return Verdict("A", True, bound, detail=f"increment ratio {ratio:.3g}")


def _padded(rho: SpectralDensity, lo: float, hi: float):
    h = rho.spacing
    g0, g1 = rho.grid[0], rho.grid[-1]
    kl = max(int(math.ceil((g0 - lo) / h)), 0)
    kr = max(int(math.ceil((hi - g1) / h)), 0)
    grid = g0 + h * np.arange(-kl, rho.grid.size + kr)
    vals = np.concatenate([np.zeros(kl), rho.values, np.zeros(kr)])
    return grid, vals


def _real_eta(eb: EtaBoundary, x: float) -> float:
    # eta on the real axis outside the support, where it is real
    if eb.lam == 0:
        return x - eb.omega
    return float((x - eb.omega - eb.lam**2 * cauchy_at(eb.rho_g.grid, eb.rho_g.values, [x])[0]).real)


def check_condition_B(eb: EtaBoundary, threshold: float | None = None, widen: float = 0.1) -> Verdict:
    """``1/eta_+`` bounded: ``min |eta_+| >= threshold`` on a widened grid.

    The grid covers the support of ``rho_g`` widened by ``widen`` on both
    sides and a window of the same width around ``omega``.  A real zero of
    ``eta`` below the spectrum (``eta(0) > 0``) or above it is a bound state
    and fails the check wherever it sits.  The default threshold is
    ``1e-3 * omega``.
    """
    thr = 1e-3 * eb.omega if threshold is None else float(threshold)
    rho = eb.rho_g
    lo_s, hi_s = rho.support if np.any(rho.values) else (0.0, 0.0)
    span = max(hi_s - lo_s, rho.grid[-1] - rho.grid[0])
    pad = widen * span
    lo = min(lo_s - pad, eb.omega - pad)
    hi = max(hi_s + pad, eb.omega + pad)
    grid, vals = _padded(rho, lo, hi)
    if eb.lam == 0:
        eta = grid.astype(complex) - eb.omega
    else:
        c = cauchy_on_grid(grid, vals, 0.0, side=+1)
        eta = grid - eb.omega - eb.lam**2 * c.real + 1j * eb.lam**2 * np.pi * vals
    a = np.abs(eta)
    j = int(np.argmin(a))
    min_abs, argmin = float(a[j]), float(grid[j])
    if eb.lam > 0 and np.any(vals):
        if np.isfinite(eb.eta_zero) and eb.eta_zero > 0:
            root = _bound_state(eb, below=True, lo_s=lo_s)
            return Verdict("B", False, 0.0, root, "real zero of eta below the spectrum")
        top = rho.grid[-1]
        if _real_eta(eb, top + 1e-9 * max(top, 1.0)) < 0:
            root = _bound_state(eb, below=False, lo_s=top)
            return Verdict("B", False, 0.0, root, "real zero of eta above the spectrum")
    ok = min_abs >= thr
    return Verdict("B", ok, min_abs, argmin, f"threshold {thr:.6g}")


def _bound_state(eb: EtaBoundary, below: bool, lo_s: float) -> float:
    f = lambda x: _real_eta(eb, x)
    if below:
        a = lo_s - 1e-9
        step = max(eb.omega, 1.0)
        b = a - step
        while f(b) > 0:
            step *= 2
            b = a - step
        return float(brentq(f, b, a))
    a = lo_s + 1e-9 * max(lo_s, 1.0)
    step = max(eb.omega, 1.0)
    b = a + step
    while f(b) < 0:
        step *= 2
        b = a + step
    return float(brentq(f, a, b))


def check_condition_D(rho: SpectralDensity) -> Verdict:
    """Form factor in the domain of ``h0^{-1/2}``: ``int rho / nu < inf``.

    On a grid starting at 0 the integral of the interpolant diverges exactly
    when ``rho(0) > 0``.
    """
    val = _inverse_moment_from_zero(rho)
    if math.isfinite(val):
        return Verdict("D", True, float(val))
    return Verdict("D", False, math.inf, 0.0, "form factor not in D(h^{-1/2}): rho(0) > 0")
