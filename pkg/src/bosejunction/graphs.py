"""Finite graph patches, adapted functions, the K operator and PF weights.

A patch is a finite piece of an infinite graph (Z^d or the comb with base
Z^d and teeth Z) or a complete finite graph read from an edge list.  Local
operations (adjacency, ``K``, PF relations) are exact on vertices whose
distance to the cut is at least ``boundary_margin``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable

import numpy as np
import scipy.sparse as sp

from .model import CombZdZ, ContinuumRd, GraphExplicit, GraphKDelta, LatticeZd, RadialContinuum, Tabulated

__all__ = [
    "GraphPatch",
    "AdaptedFunction",
    "AdaptedVerdict",
    "AdmissibleVerdict",
    "PFWeight",
    "BoundaryError",
    "zd_patch",
    "comb_patch",
    "patch_from_edge_list",
    "coordinate_sum",
    "k_apply",
    "k_delta_zd",
    "k_delta_comb",
    "expand_form_factor",
    "check_adapted",
    "orientation_from_function",
    "check_admissible",
    "comb_norm",
    "comb_theta",
    "chain_resolvent_norm_sq",
    "pf_weight",
    "pf_pairing",
]


class BoundaryError(ValueError):
    """A vector reaches into the boundary layer of a patch."""


@dataclass(frozen=True, eq=False)
class GraphPatch:
    """Finite graph with vertex labels and a symmetric 0/1 adjacency matrix.

    ``coords`` holds integer coordinates for lattice-like kinds (one row per
    vertex) and is ``None`` for custom graphs, whose labels are strings.
    ``depth`` is the graph distance to the cut; custom graphs have no cut.
    """

    kind: str
    params: tuple
    adjacency: sp.csr_matrix
    labels: tuple | None
    coords: np.ndarray | None
    depth: np.ndarray
    boundary_margin: int = 3
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self) -> int:
        return self.adjacency.shape[0]

    def label(self, i: int):
        if self.coords is not None:
            return tuple(int(c) for c in self.coords[i])
        return self.labels[i]

    def index_of(self, label: Hashable) -> int:
        if self.coords is not None:
            shape, offset = self._index["shape"], self._index["offset"]
            c = np.asarray(label, dtype=np.int64) + offset
            if c.shape != (len(shape),) or np.any(c < 0) or np.any(c >= shape):
                raise KeyError(f"vertex {label} not in patch")
            return int(np.ravel_multi_index(tuple(c), shape))
        try:
            return self._index["map"][label]
        except KeyError:
            raise KeyError(f"vertex {label!r} not in patch") from None

    def depth_of(self, label) -> float:
        return float(self.depth[self.index_of(label)])

    @property
    def interior(self) -> np.ndarray:
        return self.depth >= self.boundary_margin

    def vector(self, vec: GraphExplicit) -> np.ndarray:
        v = np.zeros(self.n_vertices, dtype=complex)
        for s, c in vec.coeffs:
            v[self.index_of(s)] += c
        return v

    def explicit(self, v: np.ndarray, tol: float = 0.0) -> GraphExplicit:
        nz = np.nonzero(np.abs(v) > tol)[0]
        return GraphExplicit(tuple(sorted((self.label(i), complex(v[i])) for i in nz)))


def _sym(rows, cols, n):
    data = np.ones(len(rows), dtype=np.int8)
    A = sp.coo_matrix((data, (rows, cols)), shape=(n, n))
    A = (A + A.T).tocsr()
    A.sum_duplicates()
    return A


def zd_patch(d: int, radius: int, boundary_margin: int = 3) -> GraphPatch:
    """Box ``[-radius, radius]^d`` of Z^d."""
    shape = (2 * radius + 1,) * d
    n = int(np.prod(shape))
    idx = np.arange(n).reshape(shape)
    rows, cols = [], []
    for ax in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        rows.append(idx[tuple(lo)].ravel())
        cols.append(idx[tuple(hi)].ravel())
    A = _sym(np.concatenate(rows), np.concatenate(cols), n)
    coords = np.stack(np.unravel_index(np.arange(n), shape), axis=1) - radius
    depth = (radius - np.abs(coords).max(axis=1)).astype(float)
    index = {"shape": np.array(shape), "offset": np.full(d, radius)}
    return GraphPatch("zd", (d, radius), A, None, coords, depth, boundary_margin, index)


def comb_patch(d: int, base_radius: int, tooth_length: int, boundary_margin: int = 3) -> GraphPatch:
    """Comb patch: base box ``[-R, R]^d`` with a tooth ``x in [-T, T]`` at every base site.

    Labels are ``(J_1, ..., J_d, x)``; the base is the layer ``x = 0``.
    """
    R, T = base_radius, tooth_length
    shape = (2 * R + 1,) * d + (2 * T + 1,)
    n = int(np.prod(shape))
    idx = np.arange(n).reshape(shape)
    rows, cols = [idx[..., :-1].ravel()], [idx[..., 1:].ravel()]
    base = idx[..., T]
    for ax in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        rows.append(base[tuple(lo)].ravel())
        cols.append(base[tuple(hi)].ravel())
    A = _sym(np.concatenate(rows), np.concatenate(cols), n)
    coords = np.stack(np.unravel_index(np.arange(n), shape), axis=1)
    coords[:, :d] -= R
    coords[:, d] -= T
    J = np.abs(coords[:, :d]).max(axis=1)
    x = np.abs(coords[:, d])
    depth = np.minimum(T - x, x + R - J).astype(float)
    index = {"shape": np.array(shape), "offset": np.array([R] * d + [T])}
    return GraphPatch("comb", (d, R, T), A, None, coords, depth, boundary_margin, index)


def patch_from_edge_list(text: str, boundary_margin: int = 0) -> GraphPatch:
    """Custom finite graph from lines ``"u v"``; blank lines and ``#`` comments ignored.

    Rejects loops, repeated edges and disconnected graphs.
    """
    edges = []
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {ln}: expected 'u v'")
        u, v = parts
        if u == v:
            raise ValueError(f"line {ln}: loop at {u}")
        edges.append((u, v))
    labels = sorted({u for e in edges for u in e})
    m = {s: i for i, s in enumerate(labels)}
    keys = {frozenset(e) for e in edges}
    if len(keys) != len(edges):
        raise ValueError("multiple edges are not allowed")
    n = len(labels)
    A = _sym([m[u] for u, _ in edges], [m[v] for _, v in edges], n)
    ncomp, _ = sp.csgraph.connected_components(A, directed=False)
    if ncomp != 1:
        raise ValueError("graph must be connected")
    depth = np.full(n, np.inf)
    return GraphPatch("custom", (), A, tuple(labels), None, depth, boundary_margin, {"map": m})


# --------------------------------------------------------------------------
# adapted functions and K


@dataclass(frozen=True, eq=False)
class AdaptedFunction:
    """Real function on the vertices of a patch (aligned with its vertex order)."""

    phi: np.ndarray
    lipschitz_c: float | None = None

    @classmethod
    def from_callable(cls, patch: GraphPatch, fn: Callable, lipschitz_c=None) -> "AdaptedFunction":
        vals = np.array([fn(patch.label(i)) for i in range(patch.n_vertices)], dtype=float)
        return cls(vals, lipschitz_c)


def coordinate_sum(patch: GraphPatch) -> AdaptedFunction:
    """``Phi = sum of coordinates`` (for the comb: base coordinates plus tooth height)."""
    if patch.coords is None:
        raise ValueError("coordinate sum needs a lattice-like patch")
    return AdaptedFunction(patch.coords.sum(axis=1).astype(float), 1.0)


def _k_matrix(patch, phi):
    A = patch.adjacency.astype(float)
    P = sp.diags(phi.phi)
    return 1j * (A @ P - P @ A)


def k_apply(patch: GraphPatch, phi: AdaptedFunction, xi: GraphExplicit, margin: int | None = None) -> GraphExplicit:
    """``(K xi)(x) = i sum_{y ~ x} (Phi(y) - Phi(x)) xi(y)``."""
    margin = patch.boundary_margin if margin is None else margin
    for s, _ in xi.coeffs:
        if patch.depth_of(s) < margin:
            raise BoundaryError(f"support of xi touches the boundary margin at {s}")
    v = patch.vector(xi)
    return patch.explicit(_k_matrix(patch, phi) @ v)


def k_delta_zd(site) -> GraphExplicit:
    """``K delta_x = i sum_k (delta_{x - e_k} - delta_{x + e_k})`` on Z^d."""
    site = tuple(int(c) for c in site)
    out = {}
    for k in range(len(site)):
        e = [0] * len(site)
        e[k] = 1
        out[tuple(a - b for a, b in zip(site, e))] = 1j
        out[tuple(a + b for a, b in zip(site, e))] = -1j
    return GraphExplicit.from_mapping(out)


def k_delta_comb(site) -> GraphExplicit:
    """``K delta_{(J, x)}`` on the comb for ``Phi(J, x) = sum J + x``."""
    site = tuple(int(c) for c in site)
    *J, x = site
    J = tuple(J)
    out = {J + (x - 1,): 1j, J + (x + 1,): -1j}
    if x == 0:
        for k in range(len(J)):
            e = [0] * len(J)
            e[k] = 1
            out[tuple(a - b for a, b in zip(J, e)) + (0,)] = 1j
            out[tuple(a + b for a, b in zip(J, e)) + (0,)] = -1j
    return GraphExplicit.from_mapping(out)


def expand_form_factor(kind, ff):
    """Replace ``GraphKDelta`` by its explicit coefficients; other form factors pass through."""
    if isinstance(ff, GraphKDelta):
        if isinstance(kind, LatticeZd):
            return k_delta_zd(ff.site)
        if isinstance(kind, CombZdZ):
            return k_delta_comb(ff.site)
        raise ValueError(f"K delta form factor needs a graph reservoir, got {type(kind).__name__}")
    return ff


@dataclass(frozen=True)
class AdaptedVerdict:
    ok: bool
    cond_i: bool
    cond_ii: bool
    cond_iii: bool
    lipschitz_c: float
    violations: tuple  # (condition, label_x, label_y, value)


def check_adapted(patch: GraphPatch, phi: AdaptedFunction, tol: float = 1e-9, max_report: int = 50) -> AdaptedVerdict:
    """Check the three adapted-function conditions on interior vertex pairs.

    (i) edge increments bounded by ``c``.  Without an explicit
    ``phi.lipschitz_c`` the bound measured on edges at the deepest vertices
    is used, so increments growing toward the cut count as violations.
    (ii) ``sum_{z in N(x) & N(y)} (2 Phi(z) - Phi(x) - Phi(y)) = 0``.
    (iii) the cubic analogue.  Both sums are assembled from
    ``A diag(Phi^p) A`` so every pair with a common neighbour is covered.
    """
    A = patch.adjacency.astype(float).tocsr()
    f = phi.phi
    inner = np.nonzero(patch.interior)[0]
    viol = []

    Ai = A[inner][:, inner].tocoo()
    inc = np.abs(f[inner[Ai.row]] - f[inner[Ai.col]])
    c = phi.lipschitz_c
    if c is None:
        dmax = np.max(patch.depth[inner]) if np.all(np.isfinite(patch.depth[inner])) else np.inf
        if np.isfinite(dmax):
            core = patch.depth[inner[Ai.row]] >= dmax - 1
            c = float(inc[core].max()) if np.any(core) else float(inc.max(initial=0.0))
        else:
            c = float(inc.max(initial=0.0))
    bad = np.nonzero(inc > c + tol)[0]
    cond_i = bad.size == 0
    for e in bad[:max_report]:
        viol.append(("i", patch.label(inner[Ai.row[e]]), patch.label(inner[Ai.col[e]]), float(inc[e])))

    Ar = A[inner]  # rows restricted to interior x
    def M(p):
        return (Ar @ sp.diags(f**p) @ Ar.T).tocsr()

    M0, M1, M2, M3 = M(0), M(1), M(2), M(3)
    co = M0.tocoo()
    a = f[inner[co.row]]
    b = f[inner[co.col]]
    m1 = np.asarray(M1[co.row, co.col]).ravel()
    m2 = np.asarray(M2[co.row, co.col]).ravel()
    m3 = np.asarray(M3[co.row, co.col]).ravel()
    m0 = co.data
    s2 = 2 * m1 - (a + b) * m0
    s3 = 2 * m3 - 3 * (a + b) * m2 + (a * a + 4 * a * b + b * b) * m1 - a * b * (a + b) * m0
    scale = 1.0 + np.abs(f).max(initial=0.0) ** 3
    bad2 = np.nonzero(np.abs(s2) > tol * (1 + np.abs(f).max(initial=0.0)))[0]
    bad3 = np.nonzero(np.abs(s3) > tol * scale)[0]
    for name, bad_, s in (("ii", bad2, s2), ("iii", bad3, s3)):
        for e in bad_[:max_report]:
            viol.append((name, patch.label(inner[co.row[e]]), patch.label(inner[co.col[e]]), float(s[e])))
    ok = cond_i and bad2.size == 0 and bad3.size == 0
    return AdaptedVerdict(ok, cond_i, bad2.size == 0, bad3.size == 0, c, tuple(viol))


# --------------------------------------------------------------------------
# admissibility


def orientation_from_function(patch: GraphPatch, phi) -> sp.csr_matrix:
    """Directed edges ``u -> v`` (``u < v``) whenever ``Phi(v) > Phi(u)``."""
    f = phi.phi if isinstance(phi, AdaptedFunction) else np.asarray(phi, dtype=float)
    A = patch.adjacency.tocoo()
    keep = f[A.col] > f[A.row]
    D = sp.coo_matrix((np.ones(keep.sum(), dtype=np.int8), (A.row[keep], A.col[keep])), shape=A.shape)
    return D.tocsr()


def orientation_from_pairs(patch: GraphPatch, less: Callable) -> sp.csr_matrix:
    """Orientation from a predicate ``less(u_label, v_label)`` evaluated on every edge."""
    A = sp.triu(patch.adjacency).tocoo()
    rows, cols = [], []
    for i, j in zip(A.row, A.col):
        if less(patch.label(i), patch.label(j)):
            rows.append(i), cols.append(j)
        else:
            rows.append(j), cols.append(i)
    n = patch.n_vertices
    return sp.coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n)).tocsr()


@dataclass(frozen=True)
class AdmissibleVerdict:
    ok: bool
    univoque: bool
    uniform: bool
    position_function: dict | None
    closed_walk_witness: tuple | None  # (start label, length, index)
    uniform_violations: tuple


def _position_function(patch, D):
    n = patch.n_vertices
    Dc = D.tocsr()
    Dt = D.T.tocsr()
    pos = np.full(n, np.iinfo(np.int64).min, dtype=np.int64)
    ok = True
    for start in range(n):
        if pos[start] != np.iinfo(np.int64).min:
            continue
        pos[start] = 0
        stack = [start]
        while stack:
            u = stack.pop()
            for mat, step in ((Dc, 1), (Dt, -1)):
                for v in mat.indices[mat.indptr[u] : mat.indptr[u + 1]]:
                    want = pos[u] + step
                    if pos[v] == np.iinfo(np.int64).min:
                        pos[v] = want
                        stack.append(v)
                    elif pos[v] != want:
                        ok = False
    return ok, pos


def _closed_walk_search(patch, D, max_len, starts):
    """Look for a closed walk of length <= max_len with nonzero index."""
    Dt = D.T.tocsr().astype(np.int32)
    Dc = D.tocsr().astype(np.int32)
    n = patch.n_vertices
    width = 2 * max_len + 1
    for s in starts:
        cur = np.zeros((width, n), dtype=bool)
        cur[max_len, s] = True
        for step in range(1, max_len + 1):
            nxt = np.zeros_like(cur)
            rows = np.nonzero(cur.any(axis=1))[0]
            for i in rows:
                v = cur[i].astype(np.int32)
                if i + 1 < width:
                    nxt[i + 1] |= (Dt @ v) > 0  # forward along u < v
                if i - 1 >= 0:
                    nxt[i - 1] |= (Dc @ v) > 0  # backward
            cur = nxt
            hit = np.nonzero(cur[:, s])[0]
            hit = hit[hit != max_len]
            if hit.size:
                return (patch.label(s), step, int(hit[0] - max_len))
    return None


def check_admissible(
    patch: GraphPatch,
    orientation: sp.csr_matrix,
    max_len: int = 12,
    exhaustive_below: int = 64,
    samples: int = 32,
    seed: int = 0,
) -> AdmissibleVerdict:
    """Univoque and uniform checks for an oriented patch.

    Univoque: a BFS tries to build a position function (``pos(v) = pos(u) + 1``
    along every ``u < v``); independently, closed walks up to ``max_len`` are
    enumerated from every start vertex when the patch has at most
    ``exhaustive_below`` vertices and from ``samples`` seeded interior starts
    otherwise.  Uniform: ``|N-(x) & N-(y)| = |N+(x) & N+(y)|`` on interior
    pairs, from the products ``D D^T`` and ``D^T D``.
    """
    D = orientation.tocsr()
    ok_pos, pos = _position_function(patch, D)
    inner = np.nonzero(patch.interior)[0]
    if patch.n_vertices <= exhaustive_below:
        starts = inner
    else:
        rng = np.random.default_rng(seed)
        starts = np.sort(rng.choice(inner, size=min(samples, inner.size), replace=False))
    witness = _closed_walk_search(patch, D, max_len, starts)
    univoque = ok_pos and witness is None

    Df = D.astype(np.int64)
    plus = (Df @ Df.T).tocsr()[inner][:, inner]
    minus = (Df.T @ Df).tocsr()[inner][:, inner]
    diff = (plus - minus).tocoo()
    bad = np.nonzero(diff.data)[0]
    uviol = tuple((patch.label(inner[diff.row[e]]), patch.label(inner[diff.col[e]])) for e in bad[:50])
    posf = {patch.label(i): int(pos[i]) for i in range(patch.n_vertices)} if ok_pos else None
    return AdmissibleVerdict(univoque and not bad.size, univoque, bad.size == 0, posf, witness, uviol)


# --------------------------------------------------------------------------
# PF weights


def comb_norm(d: int) -> float:
    """Spectral radius of the comb adjacency, ``2 sqrt(d^2 + 1)``."""
    return 2.0 * math.sqrt(d * d + 1)


def comb_theta(d: int) -> float:
    """``theta_d`` with ``cosh theta_d = sqrt(d^2 + 1)``, hence ``sinh theta_d = d``."""
    return math.asinh(d)


def chain_resolvent_norm_sq(w: float) -> float:
    """``|(w - A_Z)^{-1} delta_0|^2 = w (w^2 - 4)^{-3/2}`` for ``w > 2``."""
    if w <= 2:
        raise ValueError("w must exceed the chain norm 2")
    return w * (w * w - 4.0) ** -1.5


@dataclass(frozen=True)
class PFWeight:
    """Positive weight ``v`` with ``A v = spr v``.

    ``variant`` is ``"constant"`` (regular graphs, ``v = 1``) or ``"comb"``
    (``v(J, x) = e^{-|x| theta} / (2 |(2 sqrt(d^2+1) - A_Z)^{-1} delta_0| sinh theta)``).
    """

    variant: str
    spr: float
    d: int | None = None
    theta: float | None = None
    norm_sq: float | None = None

    def __call__(self, label) -> float:
        if self.variant == "constant":
            return 1.0
        x = abs(int(label[-1]))
        return math.exp(-x * self.theta) / (2.0 * math.sqrt(self.norm_sq) * math.sinh(self.theta))

    def on(self, patch: GraphPatch) -> np.ndarray:
        if self.variant == "constant":
            return np.ones(patch.n_vertices)
        x = np.abs(patch.coords[:, -1])
        return np.exp(-x * self.theta) / (2.0 * math.sqrt(self.norm_sq) * math.sinh(self.theta))


def pf_weight(kind) -> PFWeight:
    """PF weight for a reservoir kind or patch kind tag."""
    if isinstance(kind, GraphPatch):
        if kind.kind == "zd":
            return PFWeight("constant", 2.0 * kind.params[0], kind.params[0])
        if kind.kind == "comb":
            kind = CombZdZ(kind.params[0])
        else:
            raise ValueError("no PF weight is known for custom graphs")
    if isinstance(kind, LatticeZd):
        return PFWeight("constant", 2.0 * kind.d, kind.d)
    if isinstance(kind, CombZdZ):
        d = kind.d
        w = comb_norm(d)
        return PFWeight("comb", w, d, comb_theta(d), chain_resolvent_norm_sq(w))
    raise ValueError(f"unsupported kind for PF weights: {kind!r}")


def pf_pairing(v, psi) -> complex:
    """``<v, psi> = sum_x v(x) psi(x)`` (bilinear, no conjugation)."""
    if isinstance(psi, GraphExplicit):
        return complex(math.fsum((v(s) * c).real for s, c in psi.coeffs)) + 1j * math.fsum(
            (v(s) * c).imag for s, c in psi.coeffs
        )
    raise TypeError("pf_pairing expects a finitely supported graph vector")


def reservoir_pf_pairing(kind, vec) -> complex | None:
    """``<v, vec>`` for the reservoir's PF weight; ``None`` if unavailable.

    Continuum reservoirs use the delta function at the origin, so the pairing
    is the profile value at ``p = 0``.
    """
    if isinstance(kind, ContinuumRd):
        if isinstance(vec, RadialContinuum):
            return complex(vec(0.0))
        return None
    if isinstance(kind, (LatticeZd, CombZdZ)):
        return pf_pairing(pf_weight(kind), vec)
    if isinstance(kind, Tabulated):
        return None if kind.pf_pairing is None else complex(kind.pf_pairing)
    return None
