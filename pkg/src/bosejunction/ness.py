"""Limiting steady-state functional of the coupled system.

For a test vector ``f = (c, psi)`` the steady state is quasi-free with

* ``F(nu; f) = c + lam <g, (nu - h0 - i0)^{-1} psi>``,
* ``phi_l(f) = psi_l + lam F(h0; f) / eta_-(h0) g_l``,
* ``S(f) = sum_l <phi_l, (N_l(h0) + 1/2) phi_l>``,
* ``Lambda(f) = sum_l Theta_l(<v_l, phi_l>)``,

and Weyl expectation ``exp(-S/2 + i Lambda)``.  Everything is evaluated on one
uniform grid shared by all reservoirs, from the spectral data of ``psi_l``
against ``g_l``: the cross density ``d<g_l, E psi_l>/dnu``, the density of
``psi_l`` and the PF pairing ``<v_l, psi_l>``.

Reservoir components of a test vector are either profile vectors
``psi_l = a(h0) g_l`` (whose spectral data follow from ``rho_l``) or explicit
vectors (graph coefficients or radial profiles) whose cross densities are
estimated directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import graphs
from .model import CoupledModel, GraphExplicit, RadialContinuum, validate
from .quadrature import bose_weighted_integral, cauchy_on_grid, inverse_moment
from .selfenergy import (
    EtaBoundary,
    Verdict,
    check_condition_A,
    check_condition_B,
    check_condition_D,
    eta_boundary,
)
from .spectral import (
    SpectralDensity,
    SpectralOptions,
    reservoir_cross_density,
    reservoir_density,
    reservoir_form_factor,
    support_top,
    uniform_grid,
)

__all__ = [
    "ProfileVector",
    "ExplicitVector",
    "TestVector",
    "PhiData",
    "NessEvaluator",
    "ConditionFailure",
    "f_function",
    "phi",
    "pf_linear_form",
    "ness_covariance",
    "ness_linear",
    "omega_plus_linear",
    "weyl_expectation",
]


class ConditionFailure(RuntimeError):
    """A hypothesis of the steady-state theory fails for this model."""

    def __init__(self, verdict: Verdict):
        super().__init__(f"condition ({verdict.condition}) failed: {verdict.detail or verdict.value}")
        self.verdict = verdict


@dataclass(frozen=True)
class ProfileVector:
    """``psi = a(h0) g`` for a complex profile ``a`` sampled at ``nodes``.

    ``a`` is linear between nodes and constant beyond the first and last one.
    """

    nodes: tuple
    values: tuple

    def __post_init__(self):
        if len(self.nodes) != len(self.values) or not self.nodes:
            raise ValueError("profile needs matching, nonempty nodes and values")
        if any(b <= a for a, b in zip(self.nodes, self.nodes[1:])):
            raise ValueError("profile nodes must increase")

    @classmethod
    def constant(cls, a: complex) -> "ProfileVector":
        return cls((0.0,), (complex(a),))

    @classmethod
    def from_function(cls, fn, top: float, samples: int = 513) -> "ProfileVector":
        x = np.linspace(0.0, top, samples)
        return cls(tuple(x.tolist()), tuple(complex(fn(t)) for t in x))

    def __call__(self, nu):
        nu = np.asarray(nu, dtype=float)
        x = np.asarray(self.nodes, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if x.size == 1:
            return np.full(nu.shape, v[0])
        return np.interp(nu, x, v.real) + 1j * np.interp(nu, x, v.imag)

    def scaled(self, r: complex) -> "ProfileVector":
        return ProfileVector(self.nodes, tuple(r * complex(v) for v in self.values))


@dataclass(frozen=True)
class ExplicitVector:
    """A reservoir vector given by graph coefficients or a radial profile."""

    vector: Union[GraphExplicit, RadialContinuum]


ReservoirVector = Union[ProfileVector, ExplicitVector]


@dataclass(frozen=True)
class TestVector:
    """``f = (c, psi_1, ..., psi_N)``; ``None`` stands for a zero component."""

    __test__ = False

    c: complex = 0.0
    psi: tuple = ()

    def component(self, l: int):
        return self.psi[l] if l < len(self.psi) else None

    def scaled(self, r: float) -> "TestVector":
        out = []
        for p in self.psi:
            if p is None:
                out.append(None)
            elif isinstance(p, ProfileVector):
                out.append(p.scaled(r))
            else:
                raise TypeError("only profile components can be rescaled in place")
        return TestVector(r * complex(self.c), tuple(out))


@dataclass(frozen=True, eq=False)
class PhiData:
    """Spectral data of ``phi_l(f)`` on the evaluator grid."""

    density: np.ndarray  # d<phi, E phi>/dnu
    cross: np.ndarray  # d<g, E phi>/dnu
    pairing: complex | None  # <v, phi>
    u: np.ndarray  # lam F / eta_-


@dataclass(frozen=True, eq=False)
class NessEvaluator:
    """Model, densities on a common grid, ``eta_+``, PF pairings and verdicts."""

    model: CoupledModel
    options: SpectralOptions
    grid: np.ndarray
    densities: tuple
    rho_g: SpectralDensity
    eta: EtaBoundary
    pf: tuple  # <v_k, g_k> or None
    verdicts: dict = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        model: CoupledModel,
        options: SpectralOptions = SpectralOptions(),
        b_threshold: float | None = None,
        require_b: bool = True,
        grid=None,
    ) -> "NessEvaluator":
        """Compute densities, ``eta_+`` and the condition verdicts.

        Raises :class:`ConditionFailure` when condition (B) fails and
        ``require_b`` is set, and ``ValueError`` on an invalid model.
        ``lam == 0`` is accepted as the decoupled limit.
        """
        decoupled = model.system.lam == 0.0
        problems = [p for p in validate(model) if not (decoupled and p.startswith("system.lambda:"))]
        if problems:
            raise ValueError("; ".join(problems))
        if grid is None:
            top = max(support_top(r) for r in model.reservoirs)
            grid = uniform_grid(top, options.grid_points)
        grid = np.asarray(grid, dtype=float)
        dens = tuple(reservoir_density(r, grid, options) for r in model.reservoirs)
        total = np.sum([d.values for d in dens], axis=0)
        norm = math.fsum(d.norm_sq or 0.0 for d in dens)
        rho_g = SpectralDensity(grid, total, norm, "aggregate")
        eb = eta_boundary(model.system.omega, model.system.lam, rho_g)
        pf = tuple(graphs.reservoir_pf_pairing(r.kind, reservoir_form_factor(r)) for r in model.reservoirs)
        verdicts = {
            "A": tuple(check_condition_A(d) for d in dens),
            "B": check_condition_B(eb, b_threshold),
            "D": tuple(check_condition_D(d) for d in dens),
        }
        ev = cls(model, options, grid, dens, rho_g, eb, pf, verdicts)
        if require_b and not verdicts["B"].ok:
            raise ConditionFailure(verdicts["B"])
        return ev

    @property
    def lam(self) -> float:
        return self.model.system.lam

    @property
    def n_reservoirs(self) -> int:
        return self.model.n_reservoirs

    def verdict_summary(self) -> dict:
        return {
            "A": [v.as_dict() for v in self.verdicts["A"]],
            "B": self.verdicts["B"].as_dict(),
            "C": "assumed",
            "D": [v.as_dict() for v in self.verdicts["D"]],
            # informational: weak-coupling resonance regime, not a hypothesis
            "omega_in_spectrum": bool(self.rho_g.on([self.model.system.omega])[0] > 0),
        }


# --------------------------------------------------------------------------
# spectral data of test vectors


def _component_data(ev: NessEvaluator, l: int, vec):
    """``(cross, density, pairing)`` of ``psi_l`` on the evaluator grid."""
    rho = ev.densities[l].values
    grid = ev.grid
    if vec is None:
        z = np.zeros(grid.size)
        return z.astype(complex), z, 0j
    if isinstance(vec, ProfileVector):
        a = vec(grid)
        pair = None if ev.pf[l] is None else complex(vec(0.0)) * ev.pf[l]
        return a * rho, np.abs(a) ** 2 * rho, pair
    if isinstance(vec, ExplicitVector):
        res = ev.model.reservoirs[l]
        g = reservoir_form_factor(res)
        psi = vec.vector
        cross = reservoir_cross_density(res, g, psi, grid, ev.options)
        dens = np.clip(reservoir_cross_density(res, psi, psi, grid, ev.options).real, 0.0, None)
        pair = graphs.reservoir_pf_pairing(res.kind, psi)
        return np.asarray(cross, dtype=complex), dens, pair
    raise TypeError(f"unsupported reservoir vector {vec!r}")


def _all_data(ev: NessEvaluator, f: TestVector):
    if len(f.psi) > ev.n_reservoirs:
        raise ValueError("test vector has more components than reservoirs")
    return [_component_data(ev, l, f.component(l)) for l in range(ev.n_reservoirs)]


def _complex_inverse_moment(grid, w) -> complex:
    w = np.asarray(w)
    return complex(inverse_moment(grid, w.real, 0.0), inverse_moment(grid, np.imag(w), 0.0))


def f_function(ev: NessEvaluator, f: TestVector, data=None) -> np.ndarray:
    """``F(nu; f)`` on the evaluator grid."""
    data = _all_data(ev, f) if data is None else data
    cross = np.sum([d[0] for d in data], axis=0)
    out = complex(f.c) + ev.lam * cauchy_on_grid(ev.grid, cross, 0.0, side=-1)
    return np.asarray(out, dtype=complex)


def _f_at_zero(ev: NessEvaluator, f: TestVector, data) -> complex:
    # F(0) = c - lam int d<g, E psi>/nu
    return complex(f.c) - ev.lam * sum((_complex_inverse_moment(ev.grid, d[0]) for d in data), 0j)


def pf_linear_form(ev: NessEvaluator, f: TestVector, data=None) -> tuple:
    """``<v_l, phi_l(f)> = <v_l, psi_l> + lam F(0; f) <v_l, g_l> / eta(0)`` per reservoir.

    ``F(0; f) = c - lam <g, h0^{-1} psi>``.  Entries are ``None`` where no PF
    weight is known.
    """
    data = _all_data(ev, f) if data is None else data
    u0 = ev.lam * _f_at_zero(ev, f, data) / ev.eta.eta_zero
    out = []
    for l, (_, _, pair) in enumerate(data):
        if pair is None or ev.pf[l] is None:
            out.append(None)
        else:
            out.append(pair + u0 * ev.pf[l])
    return tuple(out)


def phi(ev: NessEvaluator, f: TestVector, l: int | None = None, data=None):
    """Spectral data of ``phi_l(f)``; all reservoirs when ``l`` is ``None``."""
    data = _all_data(ev, f) if data is None else data
    F = f_function(ev, f, data)
    if ev.lam == 0:
        u = np.zeros_like(F)
    else:
        u = ev.lam * F / ev.eta.eta_minus
    pairs = pf_linear_form(ev, f, data)
    out = []
    for k, (cross, dens, _) in enumerate(data):
        rho = ev.densities[k].values
        d = dens + 2.0 * (u * np.conj(cross)).real + np.abs(u) ** 2 * rho
        out.append(PhiData(np.clip(d, 0.0, None), cross + u * rho, pairs[k], u))
    return tuple(out) if l is None else out[l]


def ness_covariance(ev: NessEvaluator, f: TestVector) -> float:
    """``S(f) = sum_l <phi_l, (N_l + 1/2) phi_l>``.

    The Bose pole is split as ``q(x) + 1/x`` and the ``1/x`` part integrated
    exactly; a nonzero density of ``phi_l`` at the pole is a condition (D)
    violation.
    """
    parts = []
    for l, p in enumerate(phi(ev, f)):
        res = ev.model.reservoirs[l]
        if not np.any(p.density):
            continue
        n_part = bose_weighted_integral(ev.grid, p.density, res.beta, res.mu)
        if not math.isfinite(n_part):
            raise ConditionFailure(Verdict("D", False, math.inf, res.mu, f"reservoir {l}: divergent Bose integral"))
        parts.append(n_part)
        parts.append(0.5 * float(np.trapezoid(p.density, ev.grid)))
    return math.fsum(parts)


def ness_linear(ev: NessEvaluator, f: TestVector) -> float:
    """``Lambda(f) = sum_l Theta_l(<v_l, phi_l(f)>)``."""
    pairs = pf_linear_form(ev, f)
    out = []
    for l, res in enumerate(ev.model.reservoirs):
        if not getattr(res.phase, "active", False):
            continue
        if pairs[l] is None:
            raise ValueError(f"reservoirs[{l}]: no PF weight for a phase-active reservoir")
        out.append(res.phase.theta(pairs[l]))
    return math.fsum(out)


def omega_plus_linear(ev: NessEvaluator, f: TestVector) -> float:
    """Field expectation ``pi^{3/2} Lambda(f)``.

    The Weyl exponent uses the bare ``Lambda(f)``; the two normalizations
    are kept side by side rather than reconciled.
    """
    return math.pi**1.5 * ness_linear(ev, f)


def weyl_expectation(ev: NessEvaluator, f: TestVector) -> complex:
    """``exp(-S(f)/2 + i Lambda(f))``."""
    return complex(np.exp(-0.5 * ness_covariance(ev, f) + 1j * ness_linear(ev, f)))
