"""Domain types for a single bosonic mode coupled to bosonic reservoirs.

The one-particle space is ``C (+) K_1 (+) ... (+) K_N``.  The system mode has
level ``omega`` and talks to reservoir ``k`` through the form factor ``g_k``
with strength ``lam``.  Everything here is immutable and free of numerics
apart from validation and the Bose occupation.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

__all__ = [
    "SystemSpec",
    "NoPhase",
    "SSB",
    "GCS",
    "PhaseFunctional",
    "RadialContinuum",
    "GraphKDelta",
    "GraphExplicit",
    "FormFactor",
    "ContinuumRd",
    "LatticeZd",
    "CombZdZ",
    "Tabulated",
    "ReservoirKind",
    "ReservoirSpec",
    "CoupledModel",
    "validate",
    "bose_occupation",
    "sphere_area",
]

Site = tuple


@dataclass(frozen=True)
class SystemSpec:
    """System level ``omega`` and coupling constant ``lam``."""

    omega: float
    lam: float


# --------------------------------------------------------------------------
# phase functionals


@dataclass(frozen=True)
class NoPhase:
    """No condensate: the phase functional vanishes identically."""

    active = False

    def theta(self, alpha: complex) -> float:
        return 0.0


@dataclass(frozen=True)
class SSB:
    r"""Symmetry-broken condensate phase.

    ``theta(alpha) = e^{i tau} D^{1/2} alpha + e^{-i tau} D^{1/2} conj(alpha)``,
    which is real: ``2 D^{1/2} Re(e^{i tau} alpha)``.
    """

    tau: float
    D: float
    active = True

    def theta(self, alpha: complex) -> float:
        return 2.0 * math.sqrt(self.D) * (cmath.exp(1j * self.tau) * complex(alpha)).real


@dataclass(frozen=True)
class GCS:
    """Grand-canonical condensate phase, ``D^{1/2} (s1 Re alpha + s2 Im alpha)``."""

    s1: float
    s2: float
    D: float
    active = True

    def theta(self, alpha: complex) -> float:
        a = complex(alpha)
        return math.sqrt(self.D) * (self.s1 * a.real + self.s2 * a.imag)


PhaseFunctional = Union[NoPhase, SSB, GCS]


# --------------------------------------------------------------------------
# form factors


@dataclass(frozen=True)
class RadialContinuum:
    """Radial profile ``p -> g(|p|)`` on R^d, piecewise linear between samples.

    ``radii`` must start at 0 and increase; the profile vanishes beyond the
    last radius, which is the support radius.
    """

    radii: tuple
    values: tuple

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if r.ndim != 1 or r.size < 2 or r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ValueError("radii must be increasing, start at 0 and have >= 2 samples")
        if len(self.values) != r.size:
            raise ValueError("radii and values differ in length")

    @classmethod
    def from_function(cls, fn, radius: float, samples: int = 2049) -> "RadialContinuum":
        r = np.linspace(0.0, radius, samples)
        v = np.asarray([complex(fn(x)) for x in r])
        return cls(tuple(r.tolist()), tuple(v.tolist()))

    @property
    def radius(self) -> float:
        return float(self.radii[-1])

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        grid = np.asarray(self.radii)
        out = np.interp(r, grid, v.real, right=0.0) + 1j * np.interp(r, grid, v.imag, right=0.0)
        return np.where(r <= self.radius, out, 0.0)

    def norm_sq(self, d: int) -> float:
        """``|S^{d-1}| int_0^R r^{d-1} |g(r)|^2 dr``, exact for the interpolant."""
        grid = np.asarray(self.radii)
        v = np.asarray(self.values, dtype=complex)
        x, w = np.polynomial.legendre.leggauss(d + 3)
        a, b = grid[:-1, None], grid[1:, None]
        r = 0.5 * (b - a) * x + 0.5 * (a + b)
        t = (r - a) / (b - a)
        g = (1 - t) * v[:-1, None] + t * v[1:, None]
        seg = 0.5 * (b - a)[:, 0] * np.sum(w * r ** (d - 1) * np.abs(g) ** 2, axis=1)
        return sphere_area(d) * math.fsum(seg)


@dataclass(frozen=True)
class GraphKDelta:
    """Form factor ``K delta_site`` on a graph reservoir."""

    site: Site


@dataclass(frozen=True)
class GraphExplicit:
    """Finitely supported vector on a graph, stored as sorted ``(site, coeff)`` pairs."""

    coeffs: tuple = field(default=())

    @classmethod
    def from_mapping(cls, m: Mapping) -> "GraphExplicit":
        items = sorted((tuple(int(c) for c in s), complex(v)) for s, v in m.items() if v != 0)
        return cls(tuple(items))

    def as_dict(self) -> dict:
        return {s: v for s, v in self.coeffs}

    def norm_sq(self) -> float:
        return math.fsum(abs(v) ** 2 for _, v in self.coeffs)


FormFactor = Union[RadialContinuum, GraphKDelta, GraphExplicit]


# --------------------------------------------------------------------------
# reservoir kinds


@dataclass(frozen=True)
class ContinuumRd:
    """Free bosons on R^d, ``h0 = |p|^2 / 2``."""

    d: int


@dataclass(frozen=True)
class LatticeZd:
    """Bosons hopping on Z^d, ``h0 = 2d - A``."""

    d: int


@dataclass(frozen=True)
class CombZdZ:
    """Bosons on the comb with base Z^d and teeth Z, ``h0 = 2 sqrt(d^2+1) - A``."""

    d: int


@dataclass(frozen=True)
class Tabulated:
    """Density supplied as a table.  ``pf_pairing`` is ``<v, g>`` if known."""

    grid: tuple
    values: tuple
    pf_pairing: complex | None = None

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or g.size < 3 or len(self.values) != g.size:
            raise ValueError("tabulated density needs matching grid/values with >= 3 points")


ReservoirKind = Union[ContinuumRd, LatticeZd, CombZdZ, Tabulated]


@dataclass(frozen=True)
class ReservoirSpec:
    kind: ReservoirKind
    beta: float
    mu: float
    form_factor: FormFactor | None = None
    phase: PhaseFunctional = NoPhase()


@dataclass(frozen=True)
class CoupledModel:
    system: SystemSpec
    reservoirs: tuple

    def __post_init__(self):
        object.__setattr__(self, "reservoirs", tuple(self.reservoirs))

    @property
    def n_reservoirs(self) -> int:
        return len(self.reservoirs)


# --------------------------------------------------------------------------
# validation


def _finite(x) -> bool:
    try:
        return math.isfinite(float(x))
    except (TypeError, ValueError):
        return False


def _validate_reservoir(r: ReservoirSpec, where: str) -> list[str]:
    out = []
    if not (_finite(r.beta) and r.beta > 0):
        out.append(f"{where}.beta: beta must be > 0")
    if not (_finite(r.mu) and r.mu <= 0):
        out.append(f"{where}.mu: mu must be <= 0")
    if getattr(r.phase, "active", False):
        if _finite(r.mu) and r.mu < 0:
            out.append(f"{where}.phase: mu<0 requires Θ≡0")
        if not (_finite(r.phase.D) and r.phase.D > 0):
            out.append(f"{where}.phase.D: D must be > 0")
        if isinstance(r.phase, SSB) and not (_finite(r.phase.tau) and 0 <= r.phase.tau < 2 * math.pi):
            out.append(f"{where}.phase.tau: tau must lie in [0, 2π)")
    kind = r.kind
    if isinstance(kind, (ContinuumRd, LatticeZd, CombZdZ)):
        if not isinstance(kind.d, int) or kind.d < 3:
            out.append(f"{where}.kind.d: d must be an integer >= 3")
    ff = r.form_factor
    if isinstance(kind, ContinuumRd):
        if not isinstance(ff, RadialContinuum):
            out.append(f"{where}.form_factor: continuum reservoirs need a radial profile")
    elif isinstance(kind, (LatticeZd, CombZdZ)):
        if isinstance(ff, GraphKDelta):
            want = kind.d if isinstance(kind, LatticeZd) else kind.d + 1
            if len(ff.site) != want:
                out.append(f"{where}.form_factor.site: expected {want} coordinates")
        elif isinstance(ff, GraphExplicit):
            if not ff.coeffs:
                out.append(f"{where}.form_factor: empty form factor")
        else:
            out.append(f"{where}.form_factor: graph reservoirs need a graph form factor")
    elif isinstance(kind, Tabulated):
        v = np.asarray(kind.values, dtype=float)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            out.append(f"{where}.kind.values: density must be finite and >= 0")
        if np.any(np.asarray(kind.grid, dtype=float) < 0):
            out.append(f"{where}.kind.grid: density support must lie in [0, inf)")
    else:
        out.append(f"{where}.kind: unknown reservoir kind")
    return out


def validate(model: CoupledModel) -> list[str]:
    """Return a list of invariant violations; an empty list means valid.

    Each entry reads ``"<field path>: <rule>"``.
    """
    out = []
    s = model.system
    if not (_finite(s.omega) and s.omega > 0):
        out.append("system.omega: omega must be > 0")
    if not (_finite(s.lam) and s.lam > 0):
        out.append("system.lambda: lambda must be > 0")
    if len(model.reservoirs) < 1:
        out.append("reservoirs: at least one reservoir is required")
    for k, r in enumerate(model.reservoirs):
        out.extend(_validate_reservoir(r, f"reservoirs[{k}]"))
    return out


# --------------------------------------------------------------------------
# Bose function


def bose_occupation(beta: float, mu: float, x: float) -> float:
    """Bose occupation ``1 / (exp(beta (x - mu)) - 1)``.

    Returns ``math.inf`` at the pole ``x = mu = 0``.  Negative energies are a
    domain error because every reservoir Hamiltonian is nonnegative.
    """
    if x < 0:
        raise ValueError(f"energy {x} outside the reservoir spectrum [0, inf)")
    y = beta * (x - mu)
    if y == 0.0:
        return math.inf
    return 1.0 / math.expm1(y)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
