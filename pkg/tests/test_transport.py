import math

import numpy as np
import pytest

from bosejunction import transport
from bosejunction.model import SSB, CoupledModel, ReservoirSpec, SystemSpec
from bosejunction.ness import NessEvaluator

import oracles
from conftest import semicircle_kind, tab_model


def build(params, **kw):
    return NessEvaluator.build(tab_model(params, **kw))


def test_equilibrium_has_no_currents():
    ev = build([(1.3, -0.1), (1.3, -0.1), (1.3, -0.1)])
    for l in range(3):
        assert transport.charge_current(ev, l) == 0.0
        assert transport.energy_current(ev, l) == 0.0
    assert transport.entropy_production(ev) == 0.0


def test_hot_reservoir_emits():
    ev = build([(0.5, 0.0), (2.0, 0.0)])
    assert transport.charge_current(ev, 0) > 0
    assert transport.energy_current(ev, 0) > 0
    assert transport.charge_current(ev, 1) < 0


def test_transmission_is_symmetric_bitwise():
    ev = build([(0.5, 0.0), (2.0, -0.3), (1.0, 0.0)])
    for k in range(3):
        for l in range(3):
            assert np.array_equal(transport._transmission(ev, k, l), transport._transmission(ev, l, k))


def test_currents_against_direct_quadrature():
    # dense pointwise Bose factors, no pole splitting
    ev = build([(0.7, -0.05), (2.0, -0.3)])
    g = ev.grid
    T = ev.densities[0].values * ev.densities[1].values / np.abs(ev.eta.eta_plus) ** 2
    n1 = np.array([oracles.bose(0.7, -0.05, x) for x in g])
    n2 = np.array([oracles.bose(2.0, -0.3, x) for x in g])
    J = 2 * math.pi * ev.lam**4 * np.trapezoid(T * (n1 - n2), g)
    E = 2 * math.pi * ev.lam**4 * np.trapezoid(g * T * (n1 - n2), g)
    rep = transport.transport_report(ev)
    assert abs(rep.J[0] - J) <= rep.J_err[0]
    assert abs(rep.E[0] - E) <= rep.E_err[0]


def test_phase_only_gives_josephson_without_energy(comb_ev):
    assert transport.energy_current(comb_ev, 0) == 0.0
    assert transport.charge_current(comb_ev, 0) != 0.0
    assert transport.entropy_production(comb_ev) == 0.0


def test_equal_phases_have_no_josephson():
    # pairings share their complex phase, as for K delta vectors on comb teeth
    ph = SSB(0.8, 1.0)
    ev = build([(1.0, 0.0, ph, 0.3j), (1.0, 0.0, ph, 0.05j), (1.0, 0.0, ph, 1.2j)])
    for l in range(3):
        assert transport.josephson(ev, l) == pytest.approx(0.0, abs=1e-15)


def test_josephson_sums_to_zero():
    ev = build([(1.0, 0.0, SSB(0.1, 1.0), 0.3 + 0.2j), (1.0, 0.0, SSB(2.0, 0.5), -0.5j), (1.0, 0.0, SSB(4.0, 2.0), 1.0)])
    jos = [transport.josephson(ev, l) for l in range(3)]
    assert any(abs(j) > 1e-3 for j in jos)
    assert abs(math.fsum(jos)) <= 1e-14 * max(abs(j) for j in jos)


def test_comb_josephson_closed_form(comb_ev):
    th = math.acosh(math.sqrt(10.0))
    assert th == pytest.approx(1.81845, abs=1e-5)
    nrm = oracles.chain_resolvent_norm_sq(2.0 * math.sqrt(10.0))
    assert nrm == pytest.approx(0.029280, abs=1e-6)
    # a_k = i e^{-5 theta} / |r|, Theta_k = 2 Re(e^{i tau_k} .), tau_2 - tau_1 = -pi/2
    want = math.pi**3 * 0.25 / comb_ev.eta.eta_zero * 4.0 * math.exp(-10 * th) / nrm * math.sin(0.0 - math.pi / 2)
    got = transport.josephson(comb_ev, 0)
    assert got == pytest.approx(want, rel=1e-3)
    assert abs(got) > 0


def test_entropy_production_nonnegative_random():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(2, 5))
        params = [(float(rng.uniform(0.2, 5)), float(-rng.uniform(0, 1) * (rng.random() < 0.6))) for _ in range(n)]
        m = tab_model(params, omega=float(rng.uniform(0.5, 3.5)), lam=float(rng.uniform(0.05, 0.6)))
        ev = NessEvaluator.build(m, require_b=False)
        assert transport.entropy_production(ev) >= -1e-12


def test_z3_entropy_production_is_certified(z3_ev):
    rep = transport.transport_report(z3_ev)
    assert rep.Ep > 10 * rep.Ep_err
    assert rep.positivity["verdict"] == "strictly positive"
    assert rep.positivity["channels"] == [(1, 2)]


def disjoint_ev():
    k1 = semicircle_kind(1.0, 1.0)
    k2 = semicircle_kind(4.0, 1.0)
    m = CoupledModel(SystemSpec(1.0, 0.3), (ReservoirSpec(k1, 1.0, 0.0), ReservoirSpec(k2, 3.0, 0.0)))
    return NessEvaluator.build(m)


def test_open_channels():
    ev = disjoint_ev()
    ch = transport.open_channels(ev)
    assert ch[0, 1] == 0 and ch[1, 0] == 0
    assert ch[0, 0] > 0 and ch[1, 1] > 0
    ev = build([(1.0, 0.0), (2.0, 0.0)])
    assert transport.open_channels(ev)[0, 1] > 3.0


def test_positivity_verdicts():
    ev = disjoint_ev()
    rep = transport.transport_report(ev)
    assert rep.positivity["verdict"] == "hypotheses not met"
    assert rep.Ep == 0.0
    ev = build([(1.0, -0.1), (1.0, -0.1)])
    rep = transport.transport_report(ev)
    assert rep.positivity["verdict"] == "hypotheses not met" and rep.Ep == 0.0
    ev = build([(0.5, 0.0), (3.0, -0.1)])
    rep = transport.transport_report(ev)
    assert rep.positivity["verdict"] == "strictly positive"
    assert rep.positivity["Ep"] == rep.Ep > 0


def test_report_rows(z3_ev):
    rep = transport.transport_report(z3_ev)
    rows = list(rep.rows())
    assert [r["l"] for r in rows] == [1, 2]
    assert rows[0]["J"] == pytest.approx(0.022269, rel=1e-3)
    assert rows[0]["J"] == -rows[1]["J"]
