import itertools
import math

import numpy as np
import pytest
import scipy.sparse as sp
import sympy

from bosejunction import graphs
from bosejunction.model import CombZdZ, GraphExplicit, LatticeZd

import oracles


@pytest.fixture(scope="module")
def z3():
    return graphs.zd_patch(3, 6)


@pytest.fixture(scope="module")
def comb():
    return graphs.comb_patch(3, 4, 8)


def test_k_delta_on_zd(z3):
    phi = graphs.coordinate_sum(z3)
    x = (1, -1, 0)
    got = graphs.k_apply(z3, phi, GraphExplicit.from_mapping({x: 1.0})).as_dict()
    want = {}
    for k in range(3):
        e = np.eye(3, dtype=int)[k]
        want[tuple(np.subtract(x, e))] = 1j
        want[tuple(np.add(x, e))] = -1j
    assert got == want
    assert graphs.k_delta_zd(x).as_dict() == want


def test_k_delta_on_comb_tooth(comb):
    phi = graphs.coordinate_sum(comb)
    s = (0, 1, 0, 3)
    got = graphs.k_apply(comb, phi, GraphExplicit.from_mapping({s: 1.0})).as_dict()
    assert got == {(0, 1, 0, 2): 1j, (0, 1, 0, 4): -1j}
    assert graphs.k_delta_comb(s).as_dict() == got


def test_k_delta_on_comb_base(comb):
    phi = graphs.coordinate_sum(comb)
    s = (0, 0, 0, 0)
    got = graphs.k_apply(comb, phi, GraphExplicit.from_mapping({s: 1.0}))
    assert got.as_dict() == graphs.k_delta_comb(s).as_dict()


def test_k_of_constant_phi_vanishes(z3):
    phi = graphs.AdaptedFunction(np.full(z3.n_vertices, 2.5))
    xi = GraphExplicit.from_mapping({(0, 0, 0): 1.0, (1, 0, 0): 2j})
    assert graphs.k_apply(z3, phi, xi).coeffs == ()


def test_k_apply_respects_margin(z3):
    phi = graphs.coordinate_sum(z3)
    with pytest.raises(graphs.BoundaryError):
        graphs.k_apply(z3, phi, GraphExplicit.from_mapping({(6, 0, 0): 1.0}))


def test_k_commutes_with_adjacency(z3):
    phi = graphs.coordinate_sum(z3)
    rng = np.random.default_rng(0)
    m = {tuple(rng.integers(-1, 2, 3)): complex(*rng.normal(size=2)) for _ in range(6)}
    xi = GraphExplicit.from_mapping(m)
    A = z3.adjacency
    K = 1j * (A @ sp.diags(phi.phi) - sp.diags(phi.phi) @ A)
    v = z3.vector(xi)
    np.testing.assert_allclose(A @ (K @ v), K @ (A @ v), atol=1e-12)


def test_adapted_z3(z3):
    v = graphs.check_adapted(z3, graphs.coordinate_sum(z3))
    assert v.ok and v.violations == ()


def test_adapted_fails_for_square(z3):
    phi = graphs.AdaptedFunction.from_callable(z3, lambda s: float(s[0] ** 2), lipschitz_c=1.0)
    v = graphs.check_adapted(z3, phi)
    assert not v.ok and not v.cond_i


def brute_sums(patch, phi, x, y):
    A = patch.adjacency.tolil()
    f = phi.phi
    common = set(A.rows[x]) & set(A.rows[y])
    s2 = sum(2 * f[z] - f[x] - f[y] for z in common)
    s3 = sum((f[z] - f[x]) * (f[z] - f[y]) * (2 * f[z] - f[x] - f[y]) for z in common)
    return s2, s3


def test_adapted_comb_fails_only_at_junctions(comb):
    # the coordinate sum breaks (ii) and (iii) where a base vertex and a
    # tooth vertex one step off the base share a single neighbour
    phi = graphs.coordinate_sum(comb)
    v = graphs.check_adapted(comb, phi)
    assert v.cond_i and not v.cond_ii and not v.cond_iii
    for cond, a, b, val in v.violations:
        i, j = comb.index_of(a), comb.index_of(b)
        s2, s3 = brute_sums(comb, phi, i, j)
        assert val == (s2 if cond == "ii" else s3) != 0
        assert max(abs(a[-1]), abs(b[-1])) == 1
    # spot check away from the junction layer
    x, y = comb.index_of((0, 0, 0, 3)), comb.index_of((0, 0, 0, 5))
    assert brute_sums(comb, phi, x, y) == (0, 0)


def test_admissible_z3(z3):
    phi = graphs.coordinate_sum(z3)
    v = graphs.check_admissible(z3, graphs.orientation_from_function(z3, phi))
    assert v.ok
    pos = v.position_function
    shift = pos[(0, 0, 0)]
    assert all(pos[s] - shift == sum(s) for s in [(1, 2, 3), (-4, 0, 2), (6, 6, 6)])


def cycle_patch(n):
    return graphs.patch_from_edge_list("\n".join(f"v{i} v{(i + 1) % n}" for i in range(n)))


def cycle_orientation(patch, n, forward):
    def less(u, v):
        i, j = int(u[1:]), int(v[1:])
        along = j == (i + 1) % n
        edge = i if along else j
        return forward[edge] == along

    return graphs.orientation_from_pairs(patch, less)


@pytest.mark.parametrize("forward", list(itertools.product([True, False], repeat=3)))
def test_triangle_never_univoque(forward):
    p = cycle_patch(3)
    v = graphs.check_admissible(p, cycle_orientation(p, 3, forward))
    assert not v.univoque and not v.ok


def brute_uniform(n, forward):
    less = set()
    for i in range(n):
        j = (i + 1) % n
        less.add((i, j) if forward[i] else (j, i))
    up = {x: {y for (a, y) in less if a == x} for x in range(n)}
    down = {x: {a for (a, y) in less if y == x} for x in range(n)}
    return all(len(down[x] & down[y]) == len(up[x] & up[y]) for x in range(n) for y in range(n))


@pytest.mark.parametrize("forward", list(itertools.product([True, False], repeat=4)))
def test_four_cycle_against_enumeration(forward):
    p = cycle_patch(4)
    v = graphs.check_admissible(p, cycle_orientation(p, 4, forward))
    assert v.univoque == oracles.cycle_index_univoque(forward)
    assert v.uniform == brute_uniform(4, forward)


def test_four_cycle_alternating_is_univoque():
    p = cycle_patch(4)
    v = graphs.check_admissible(p, cycle_orientation(p, 4, (True, False, True, False)))
    assert v.univoque


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5, 17])
def test_sinh_theta_is_d(d):
    th = sympy.acosh(sympy.sqrt(d * d + 1))
    assert sympy.simplify(sympy.sinh(th) - d) == 0
    assert math.sinh(graphs.comb_theta(d)) == pytest.approx(d, rel=4e-16)


def test_chain_resolvent_norm():
    w = 2 * math.sqrt(10)
    exact = math.sqrt(10) / 108
    assert graphs.chain_resolvent_norm_sq(w) == pytest.approx(exact, rel=1e-14)
    assert oracles.chain_resolvent_norm_sq(w) == pytest.approx(exact, rel=1e-12)
    # -d/dw (w^2 - 4)^{-1/2}
    wsym = sympy.symbols("w")
    deriv = -sympy.diff((wsym**2 - 4) ** sympy.Rational(-1, 2), wsym)
    assert float(deriv.subs(wsym, w)) == pytest.approx(exact, rel=1e-14)


def test_comb_pf_weight_value():
    v = graphs.pf_weight(CombZdZ(3))
    assert v((0, 0, 0, 0)) == pytest.approx(0.9740, abs=5e-5)
    assert v.spr == pytest.approx(2 * math.sqrt(10))


@pytest.mark.parametrize("make", [lambda: graphs.zd_patch(3, 5), lambda: graphs.comb_patch(3, 4, 10)])
def test_pf_relation_on_interior(make):
    patch = make()
    v = graphs.pf_weight(patch)
    vv = v.on(patch)
    r = patch.adjacency @ vv - v.spr * vv
    assert np.max(np.abs(r[patch.interior])) <= 1e-10 * np.max(vv)
    assert np.all(vv > 0)


def test_zero_pf_pairing_on_z3(z3):
    phi = graphs.coordinate_sum(z3)
    v = graphs.pf_weight(LatticeZd(3))
    rng = np.random.default_rng(42)
    for _ in range(100):
        k = rng.integers(1, 8)
        sites = rng.integers(-3, 4, size=(k, 3))
        coef = rng.normal(size=k) + 1j * rng.normal(size=k)
        zeta = GraphExplicit.from_mapping({tuple(s): c for s, c in zip(sites, coef)})
        if not zeta.coeffs:
            continue
        kz = graphs.k_apply(z3, phi, zeta)
        assert abs(graphs.pf_pairing(v, kz)) <= 1e-12 * (1 + np.abs(coef).sum())


@pytest.mark.parametrize("x", [1, 2, 5, 9])
def test_comb_pairing_closed_form(x):
    v = graphs.pf_weight(CombZdZ(3))
    got = graphs.pf_pairing(v, graphs.k_delta_comb((1, -2, 0, x)))
    th = math.acosh(math.sqrt(10))
    want = 1j * math.exp(-x * th) / math.sqrt(oracles.chain_resolvent_norm_sq(2 * math.sqrt(10)))
    assert abs(got - want) <= 1e-12 * abs(want)


def test_pairing_of_zero():
    assert graphs.pf_pairing(graphs.pf_weight(CombZdZ(3)), GraphExplicit()) == 0


def test_edge_list_validation():
    with pytest.raises(ValueError):
        graphs.patch_from_edge_list("a a\n")
    with pytest.raises(ValueError):
        graphs.patch_from_edge_list("a b\nb a\n")
    with pytest.raises(ValueError):
        graphs.patch_from_edge_list("a b\nc d\n")
    p = graphs.patch_from_edge_list("# comment\na b\n\nb c  # tail\n")
    assert p.n_vertices == 3
