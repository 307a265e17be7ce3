"""Steady-state currents and entropy production.

With ``T_kl(nu) = rho_k rho_l / |eta_-(nu)|^2``:

* particle current ``J_l = 2 pi lam^4 sum_k int T_kl (N_l - N_k) + Jos_l``,
* energy current ``E_l = 2 pi lam^4 sum_k int nu T_kl (N_l - N_k)``,
* Josephson term ``Jos_l = pi^3 lam^2 / eta(0) sum_k [Theta_k(a_k) Theta_l(i a_l)
  - Theta_k(i a_k) Theta_l(a_l)]`` with ``a_k = <v_k, g_k>``,
* entropy production ``Ep = pi lam^4 sum_{k,l} int T_kl [beta_l (nu - mu_l)
  - beta_k (nu - mu_k)] (N_k - N_l)``.

Currents count flow out of reservoir ``l`` into the system as positive.  The
Bose pole at ``mu = 0`` is split as ``q(x) + 1/x`` with the ``1/x`` part
integrated exactly, so equal-temperature differences cancel bit for bit.
Quadrature errors are the difference between the full grid and every other
grid point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ness import NessEvaluator
from .quadrature import bose_weighted_integral, inverse_moment

__all__ = [
    "TransportReport",
    "charge_current",
    "energy_current",
    "josephson",
    "entropy_production",
    "open_channels",
    "positivity_verdict",
    "transport_report",
]

_ROUND = 8 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class TransportReport:
    J: tuple
    E: tuple
    Jos: tuple
    J_err: tuple
    E_err: tuple
    Jos_err: tuple
    Ep: float
    Ep_err: float
    open_channels: np.ndarray
    open_threshold: float
    positivity: dict
    condition_verdicts: dict

    def rows(self):
        for l in range(len(self.J)):
            yield {
                "l": l + 1,
                "J": self.J[l],
                "E": self.E[l],
                "Jos": self.Jos[l],
                "J_err": self.J_err[l],
                "E_err": self.E_err[l],
            }


def _transmission(ev: NessEvaluator, k: int, l: int, step: int = 1) -> np.ndarray:
    rk = ev.densities[k].values[::step]
    rl = ev.densities[l].values[::step]
    a = np.abs(ev.eta.eta_plus[::step]) ** 2
    # written symmetrically so that T_kl and T_lk agree bit for bit
    return (rk * rl) / a if k <= l else (rl * rk) / a


def _bose_moment(grid, w, res) -> float:
    if not np.any(w):
        return 0.0
    return bose_weighted_integral(grid, w, res.beta, res.mu)


def _thermal(ev: NessEvaluator, l: int, energy: bool, step: int = 1):
    """``2 pi lam^4 sum_k int w T_kl (N_l - N_k)`` and the sum of magnitudes."""
    grid = ev.grid[::step]
    res = ev.model.reservoirs
    terms = []
    for k in range(ev.n_reservoirs):
        if k == l:
            continue
        w = _transmission(ev, k, l, step)
        if energy:
            w = grid * w
        if res[k].beta == res[l].beta and res[k].mu == res[l].mu:
            continue
        terms.append(_bose_moment(grid, w, res[l]))
        terms.append(-_bose_moment(grid, w, res[k]))
    pref = 2.0 * math.pi * ev.lam**4
    return pref * math.fsum(terms), pref * math.fsum(abs(t) for t in terms)


def _pf_args(ev: NessEvaluator, k: int):
    res = ev.model.reservoirs[k]
    if not getattr(res.phase, "active", False):
        return 0.0, 0.0
    a = ev.pf[k]
    if a is None:
        raise ValueError(f"reservoirs[{k}]: no PF weight for a phase-active reservoir")
    return res.phase.theta(a), res.phase.theta(1j * a)


def _jos_bracket(ev: NessEvaluator, l: int) -> float:
    tl, til = _pf_args(ev, l)
    out = []
    for k in range(ev.n_reservoirs):
        tk, tik = _pf_args(ev, k)
        out.append(tk * til - tik * tl)
    return math.fsum(out)


def josephson(ev: NessEvaluator, l: int, eta_zero: float | None = None) -> float:
    """Phase-driven part of ``J_l``."""
    b = _jos_bracket(ev, l)
    if b == 0.0:
        return 0.0
    e0 = ev.eta.eta_zero if eta_zero is None else eta_zero
    if not math.isfinite(e0) or e0 == 0:
        raise ValueError("eta(0) is not finite and nonzero")
    return math.pi**3 * ev.lam**2 / e0 * b


def charge_current(ev: NessEvaluator, l: int) -> float:
    """``J_l``: thermal part plus Josephson part."""
    return _thermal(ev, l, False)[0] + josephson(ev, l)


def energy_current(ev: NessEvaluator, l: int) -> float:
    """``E_l``; phases do not enter."""
    return _thermal(ev, l, True)[0]


def _ep(ev: NessEvaluator, step: int = 1) -> float:
    grid = ev.grid[::step]
    res = ev.model.reservoirs
    n = ev.n_reservoirs
    x = [r.beta * (grid - r.mu) for r in res]
    with np.errstate(divide="ignore"):
        occ = [1.0 / np.expm1(xx) for xx in x]
    parts = []
    for k in range(n):
        for l in range(n):
            if k == l or (res[k].beta == res[l].beta and res[k].mu == res[l].mu):
                continue
            T = _transmission(ev, k, l, step)
            with np.errstate(invalid="ignore"):
                integrand = T * (x[l] - x[k]) * (occ[k] - occ[l])
            # T vanishes wherever an occupation is infinite
            integrand = np.where(T > 0, integrand, 0.0)
            integrand = np.nan_to_num(integrand, nan=0.0, posinf=0.0)
            parts.append(float(np.trapezoid(integrand, grid)))
    return math.pi * ev.lam**4 * math.fsum(parts)


def entropy_production(ev: NessEvaluator) -> float:
    """Mean entropy production rate; nonnegative term by term."""
    return _ep(ev)


def open_channels(ev: NessEvaluator, threshold: float = 1e-8) -> np.ndarray:
    """Measure of ``{nu : T_kl(nu) > threshold}`` by grid counting, ``N x N``."""
    n = ev.n_reservoirs
    h = float(ev.grid[1] - ev.grid[0])
    out = np.zeros((n, n))
    for k in range(n):
        for l in range(n):
            out[k, l] = h * np.count_nonzero(_transmission(ev, k, l) > threshold)
    return out


def positivity_verdict(ev: NessEvaluator, ep: float, ep_err: float, channels: np.ndarray) -> dict:
    """Strict positivity of ``Ep`` when an open channel joins distinct reservoirs."""
    res = ev.model.reservoirs
    pairs = [
        (k + 1, l + 1)
        for k in range(ev.n_reservoirs)
        for l in range(k + 1, ev.n_reservoirs)
        if channels[k, l] > 0 and (res[k].beta, res[k].mu) != (res[l].beta, res[l].mu)
    ]
    if not pairs:
        verdict = "hypotheses not met"
    elif ep > 10 * ep_err and ep > 0:
        verdict = "strictly positive"
    else:
        verdict = "inconclusive"
    return {"verdict": verdict, "Ep": ep, "Ep_err": ep_err, "channels": pairs}


def transport_report(ev: NessEvaluator, open_threshold: float = 1e-8) -> TransportReport:
    """All currents with quadrature errors, ``Ep``, open channels and verdicts."""
    n = ev.n_reservoirs
    J, E, Jos, Je, Ee, Jose = [], [], [], [], [], []
    coarse_e0 = None
    if ev.lam > 0:
        g2 = ev.grid[::2]
        coarse_e0 = -ev.model.system.omega + ev.lam**2 * inverse_moment(g2, ev.rho_g.values[::2], 0.0)
    for l in range(n):
        jt, jmag = _thermal(ev, l, False)
        jt2, _ = _thermal(ev, l, False, 2)
        et, emag = _thermal(ev, l, True)
        et2, _ = _thermal(ev, l, True, 2)
        jos = josephson(ev, l)
        jos2 = josephson(ev, l, coarse_e0) if jos != 0.0 else 0.0
        J.append(jt + jos)
        E.append(et)
        Jos.append(jos)
        Jose.append(abs(jos - jos2) + _ROUND * abs(jos))
        Je.append(abs(jt - jt2) + _ROUND * jmag + Jose[-1])
        Ee.append(abs(et - et2) + _ROUND * emag)
    ep = _ep(ev)
    ep_err = abs(ep - _ep(ev, 2))
    ch = open_channels(ev, open_threshold)
    pos = positivity_verdict(ev, ep, ep_err, ch)
    return TransportReport(
        tuple(J), tuple(E), tuple(Jos), tuple(Je), tuple(Ee), tuple(Jose), ep, ep_err, ch, open_threshold, pos,
        ev.verdict_summary(),
    )
