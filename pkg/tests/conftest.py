import math

import numpy as np
import pytest

from bosejunction import ness
from bosejunction.model import (
    SSB,
    CombZdZ,
    CoupledModel,
    GraphKDelta,
    LatticeZd,
    NoPhase,
    ReservoirSpec,
    SystemSpec,
    Tabulated,
)

import oracles

OMEGA = 3.0
LAM = 0.5


def z3_reservoir(beta, mu, phase=NoPhase()):
    return ReservoirSpec(LatticeZd(3), beta, mu, GraphKDelta((0, 0, 0)), phase)


def z3_model(lam=LAM):
    return CoupledModel(SystemSpec(OMEGA, lam), (z3_reservoir(1.0, 0.0), z3_reservoir(2.0, -0.1)))


def semicircle_kind(center=2.0, radius=2.0, mass=1.0, pf=None, n=801):
    x = np.linspace(center - radius, center + radius, n)
    return Tabulated(tuple(x.tolist()), tuple((mass * oracles.semicircle(x, center, radius)).tolist()), pf)


def tab_model(params, omega=2.0, lam=0.3):
    """Semicircle reservoirs; ``params`` holds ``(beta, mu)`` or ``(beta, mu, phase, pf)``."""
    res = []
    for p in params:
        beta, mu = p[0], p[1]
        phase = p[2] if len(p) > 2 else NoPhase()
        pf = p[3] if len(p) > 3 else None
        res.append(ReservoirSpec(semicircle_kind(pf=pf), beta, mu, None, phase))
    return CoupledModel(SystemSpec(omega, lam), tuple(res))


def comb_model():
    site = (0, 0, 0, 5)
    r1 = ReservoirSpec(CombZdZ(3), 1.0, 0.0, GraphKDelta(site), SSB(math.pi / 2, 1.0))
    r2 = ReservoirSpec(CombZdZ(3), 1.0, 0.0, GraphKDelta(site), SSB(0.0, 1.0))
    return CoupledModel(SystemSpec(6.3, 0.5), (r1, r2))


@pytest.fixture(scope="session")
def z3_ev():
    return ness.NessEvaluator.build(z3_model())


@pytest.fixture(scope="session")
def comb_ev():
    return ness.NessEvaluator.build(comb_model())


@pytest.fixture(scope="session")
def tab_ev():
    return ness.NessEvaluator.build(tab_model([(1.0, 0.0), (2.0, -0.2)]))
