"""Combinatorial and magnetic Laplacians on ball graphs.

The magnetic Laplacian acts by (D_sigma f)(v) = sum_{w~v} (f(v) - sigma([w,v]) f(w))
for a U(1) multiplier sigma on oriented edges with sigma([u,v]) = conj(sigma([v,u])).
Phases are stored once per canonically oriented edge (u < v); the reversed
orientation is always derived by conjugation, so the symmetry cannot be broken.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigensolverError
from .graph_core import BallGraph, VertexFunction, as_values


@dataclass
class Multiplier:
    """U(1) phase assignment on the oriented edges of a ball graph.

    `phases[i]` is the phase of the i-th canonical edge (u_i, v_i) with
    u_i < v_i, oriented u -> v.  `flux` optionally records the Harper flux
    used to generate the phases.
    """

    graph: BallGraph
    phases: np.ndarray
    flux: Fraction | float | None = None

    def __post_init__(self):
        self.phases = np.asarray(self.phases, dtype=complex)
        n_edges = len(self.graph.edges[0])
        if self.phases.shape != (n_edges,):
            raise ValueError(f"expected {n_edges} edge phases, got {self.phases.shape}")
        if np.max(np.abs(np.abs(self.phases) - 1.0), initial=0.0) > 1e-12:
            raise ValueError("edge phases must be unimodular")

    def phase(self, u: int, v: int) -> complex:
        """Phase of the oriented edge [u, v]."""
        if u < v:
            return complex(self.phases[self.graph.edge_index[(u, v)]])
        return complex(np.conj(self.phases[self.graph.edge_index[(v, u)]]))

    def is_trivial(self) -> bool:
        return bool(np.all(self.phases == 1.0))


def trivial_multiplier(graph: BallGraph) -> Multiplier:
    return Multiplier(graph, np.ones(len(graph.edges[0]), dtype=complex), flux=0)


def harper_multiplier(graph: BallGraph, alpha_flux) -> Multiplier:
    """Landau-gauge multiplier on a Z^2 ball with the given flux per plaquette.

    Horizontal edges get phase 1; the oriented edge (m, n) -> (m, n+1) gets
    phase exp(2 pi i alpha m).  The plaquette holonomy is exp(2 pi i alpha).
    """
    if graph.spec.kind != "free_abelian" or graph.spec.rank != 2:
        raise ValueError("harper_multiplier requires a Z^2 ball")
    alpha = float(alpha_flux)
    eu, ev = graph.edges
    phases = np.ones(len(eu), dtype=complex)
    for i, (a, b) in enumerate(zip(eu, ev)):
        (m1, n1) = graph.label(int(a))
        (m2, n2) = graph.label(int(b))
        if m1 == m2:
            # vertical edge; orient along increasing n
            if n2 == n1 + 1:
                phases[i] = cmath.exp(2j * math.pi * alpha * m1)
            else:
                phases[i] = cmath.exp(-2j * math.pi * alpha * m1)
    return Multiplier(graph, phases, flux=alpha_flux)


def gauge_transform(sigma: Multiplier, chi) -> Multiplier:
    """Conjugate the multiplier by a unimodular vertex function chi.

    The new phase of an oriented edge [w, v] is chi(v) sigma([w,v]) conj(chi(w)).
    """
    g = sigma.graph
    chi = as_values(g, chi).astype(complex)
    if np.max(np.abs(np.abs(chi) - 1.0)) > 1e-12:
        raise ValueError("gauge function must be unimodular at every vertex")
    eu, ev = g.edges
    new_phases = chi[ev] * sigma.phases * np.conj(chi[eu])
    return Multiplier(g, new_phases, flux=sigma.flux)


def plaquette_holonomy(sigma: Multiplier, corners) -> complex:
    """Product of oriented phases around a closed vertex cycle."""
    h = 1.0 + 0.0j
    for a, b in zip(corners, corners[1:] + corners[:1]):
        h *= sigma.phase(a, b)
    return h


@dataclass
class SparseHermitian:
    """A sparse Hermitian operator on (a subset of) the vertices of a ball."""

    matrix: sp.csr_matrix
    kind: str  # laplacian | magnetic | dirichlet | schrodinger
    vertex_ids: np.ndarray
    graph: BallGraph | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def is_real(self) -> bool:
        return not np.iscomplexobj(self.matrix.data)

    def hermiticity_defect(self) -> float:
        d = self.matrix - self.matrix.getH()
        return 0.0 if d.nnz == 0 else float(np.abs(d.data).max())

    def position_of(self, vertex: int) -> int:
        """Row index of a graph vertex id, or -1 if absent."""
        hits = np.flatnonzero(self.vertex_ids == vertex)
        return int(hits[0]) if len(hits) else -1

    def entries(self):
        """Iterate (row, col, value) coordinate triplets."""
        coo = self.matrix.tocoo()
        for r, c, v in zip(coo.row, coo.col, coo.data):
            yield int(r), int(c), complex(v)

    def export_text(self, path):
        """Coordinate-triplet text export: row col re im, 0-based."""
        with open(path, "w") as fh:
            for r, c, v in self.entries():
                fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


@dataclass
class Potential:
    """A real potential, diagonal in the vertex basis, constant on orbits."""

    graph: BallGraph
    values: np.ndarray
    lower_bound: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.graph.n_vertices:
            raise ValueError("potential length does not match vertex count")
        if self.values.min() < self.lower_bound - 1e-12:
            raise ValueError("potential values fall below the declared lower bound")


def constant_potential(graph: BallGraph, c: float) -> Potential:
    return Potential(graph, np.full(graph.n_vertices, float(c)), lower_bound=float(c))


def _adjacency_csr(graph: BallGraph, phases: np.ndarray | None) -> sp.csr_matrix:
    n = graph.n_vertices
    eu, ev = graph.edges
    if phases is None:
        data = np.ones(len(eu))
        upper = sp.csr_matrix((data, (eu, ev)), shape=(n, n))
        return upper + upper.T
    # entry (v, w) of the operator is -sigma([w, v]); adjacency carries sigma([w, v])
    # row v=ev, col w=eu gets phase of [eu -> ev]; the transpose pair is conjugated
    upper = sp.csr_matrix((phases, (ev, eu)), shape=(n, n))
    return upper + upper.conj().T


def laplacian_matrix(graph: BallGraph) -> SparseHermitian:
    """Combinatorial Laplacian of the ball: diagonal m(x), off-diagonal -1."""
    adj = _adjacency_csr(graph, None)
    deg = graph.degrees().astype(float)
    mat = sp.diags(deg) - adj
    return SparseHermitian(mat.tocsr(), "laplacian", np.arange(graph.n_vertices), graph)


def magnetic_matrix(graph: BallGraph, sigma: Multiplier | None) -> SparseHermitian:
    """Magnetic Laplacian for the multiplier sigma (trivial sigma gives the Laplacian)."""
    if sigma is None or sigma.is_trivial():
        out = laplacian_matrix(graph)
        return out
    adj = _adjacency_csr(graph, sigma.phases)
    deg = graph.degrees().astype(float)
    mat = sp.diags(deg).astype(complex) - adj
    return SparseHermitian(mat.tocsr(), "magnetic", np.arange(graph.n_vertices), graph)


def apply_laplacian(graph: BallGraph, f) -> VertexFunction:
    """(Delta f)(v) = sum_{w~v} (f(v) - f(w)), neighbors inside the ball."""
    vals = as_values(graph, f)
    mat = _cached_operator(graph, None).matrix
    return VertexFunction(graph, mat @ vals)


def apply_magnetic(graph: BallGraph, sigma: Multiplier, f) -> VertexFunction:
    """(Delta_sigma f)(v) = sum_{w~v} (f(v) - sigma([w,v]) f(w))."""
    if sigma.graph is not graph:
        raise ValueError("multiplier belongs to a different graph")
    vals = as_values(graph, f).astype(complex)
    mat = _cached_operator(graph, sigma).matrix
    return VertexFunction(graph, mat @ vals)


_OPERATOR_CACHE: dict = {}


def _cached_operator(graph: BallGraph, sigma: Multiplier | None) -> SparseHermitian:
    key = (id(graph), id(sigma) if sigma is not None else None)
    hit = _OPERATOR_CACHE.get(key)
    if hit is not None and hit[0] is graph and (sigma is None or hit[1] is sigma):
        return hit[2]
    out = magnetic_matrix(graph, sigma)
    if len(_OPERATOR_CACHE) > 64:
        _OPERATOR_CACHE.clear()
    _OPERATOR_CACHE[key] = (graph, sigma, out)
    return out


def dirichlet_matrix(graph: BallGraph, sigma: Multiplier | None = None) -> SparseHermitian:
    """Laplacian compressed to interior vertices, boundary values pinned to zero.

    The diagonal keeps the full valence of each interior vertex in the ambient
    graph (which equals its ball degree, since interior vertices have all
    neighbors present); off-diagonal entries couple interior neighbors only.
    """
    interior = graph.interior
    if len(interior) == 0:
        raise ValueError("ball has empty interior; increase the radius")
    full = _cached_operator(graph, sigma).matrix
    sub = full[interior][:, interior].tocsr()
    return SparseHermitian(sub, "dirichlet", interior.copy(), graph)


def schrodinger_matrix(graph: BallGraph, sigma: Multiplier | None, potential: Potential) -> SparseHermitian:
    base = magnetic_matrix(graph, sigma)
    mat = base.matrix + sp.diags(potential.values)
    return SparseHermitian(mat.tocsr(), "schrodinger", base.vertex_ids, graph)


def operator_norm_bound(graph: BallGraph, potential: Potential | None = None) -> float:
    """Safe operator-norm bound 2M (plus the potential range when present)."""
    c = 2.0 * graph.valence_bound
    if potential is not None:
        c += float(np.max(np.abs(potential.values)))
    return c


def lowest_eigenpair(A: SparseHermitian, tol: float = 1e-10, max_iter: int = 500,
                     start=None) -> tuple[float, VertexFunction]:
    """Smallest eigenvalue and eigenvector by shifted inverse iteration.

    Stops when ||A v - lam v|| <= tol for the unit eigenvector v.  For real
    Dirichlet matrices the eigenvector is returned positive (Perron) and
    scaled so that its value at the root is 1 when the root is interior.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = A.dim
    mat = A.matrix
    if n == 1:
        lam = float(mat[0, 0].real)
        vec = np.array([1.0])
        return lam, _wrap_eigvec(A, vec)
    scale = float(np.abs(mat.diagonal()).max() or 1.0)
    shift = -1e-2 * scale
    # all-ones start with a fixed deterministic perturbation, so exact
    # symmetries cannot leave the iteration orthogonal to the ground state
    v = np.ones(n, dtype=mat.dtype)
    v += 1e-3 * np.cos(1.7 * np.arange(n))
    if np.iscomplexobj(mat.data):
        v = v + 1e-3j * np.sin(2.3 * np.arange(n))
    v /= np.linalg.norm(v)
    if start is not None:
        v = start.astype(mat.dtype)
        v /= np.linalg.norm(v)
    lu = spla.splu((mat - shift * sp.identity(n, dtype=mat.dtype, format="csr")).tocsc())
    lam = float(np.real(np.vdot(v, mat @ v)))
    resid = math.inf
    refactored = 0
    for it in range(max_iter):
        w = lu.solve(v)
        nw = np.linalg.norm(w)
        if not np.isfinite(nw) or nw == 0:
            raise EigensolverError("inverse iteration produced a degenerate vector", residual=resid)
        v = w / nw
        Av = mat @ v
        lam = float(np.real(np.vdot(v, Av)))
        resid = float(np.linalg.norm(Av - lam * v))
        if resid <= tol:
            break
        # re-shift close below the current estimate for cubic-ish convergence
        if it >= 8 and it % 8 == 0 and refactored < 6:
            new_shift = lam - max(4.0 * resid, 1e-14 * scale)
            if new_shift > shift:
                shift = new_shift
                lu = spla.splu((mat - shift * sp.identity(n, dtype=mat.dtype, format="csr")).tocsc())
                refactored += 1
    else:
        raise EigensolverError(
            f"inverse iteration did not reach tol={tol} in {max_iter} iterations "
            f"(achieved residual {resid:.3e})", residual=resid)
    if A.kind == "dirichlet" and A.is_real():
        v = np.real(v)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
    return lam, _wrap_eigvec(A, v)


def _wrap_eigvec(A: SparseHermitian, v: np.ndarray) -> VertexFunction:
    if A.graph is None or A.dim == A.graph.n_vertices:
        vec = v
        graph = A.graph
        if graph is None:
            raise ValueError("operator has no graph attached")
    else:
        graph = A.graph
        vec = np.zeros(graph.n_vertices, dtype=v.dtype)
        vec[A.vertex_ids] = v
    if A.kind == "dirichlet":
        root = graph.root
        if abs(vec[root]) > 1e-8 * np.abs(vec).max():
            vec = vec / vec[root]
    return VertexFunction(graph, vec)


def kato_defect(graph: BallGraph, sigma: Multiplier | None, f) -> VertexFunction:
    """Pointwise Kato defect Re(Delta_sigma f . conj f) - |f| Delta |f|.

    Nonnegative at every vertex for any valid multiplier; the contract is
    asserted on interior vertices.
    """
    vals = as_values(graph, f).astype(complex)
    mag = _cached_operator(graph, sigma).matrix @ vals
    absf = np.abs(vals)
    lap_abs = _cached_operator(graph, None).matrix @ absf
    defect = np.real(mag * np.conj(vals)) - absf * lap_abs
    return VertexFunction(graph, defect)
