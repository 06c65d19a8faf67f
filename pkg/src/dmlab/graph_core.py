"""Cayley graphs of Z^d, free groups, and the discrete Heisenberg group,
truncated to finite metric balls.

Vertices get dense integer ids in BFS discovery order, so runs are
deterministic and balls of increasing radius share a common id prefix
(the radius-r ball is an id-prefix of the radius-r' ball for r < r').
Group elements are canonical tuples: integer vectors for Z^d, reduced
letter sequences for free groups, integer triples for Heisenberg.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CapExceededError

DEFAULT_VERTEX_CAP = 5_000_000

_FAMILIES = ("free_abelian", "free_group", "heisenberg")


@dataclass(frozen=True)
class GroupSpec:
    """A finitely generated group with its fixed symmetric generator set.

    kind is one of "free_abelian" (Z^rank), "free_group" (F_rank) or
    "heisenberg" (discrete Heisenberg with generators x^{+-1}, y^{+-1}).
    """

    kind: str
    rank: int = 1

    def __post_init__(self):
        if self.kind not in _FAMILIES:
            raise ValueError(f"unknown group family {self.kind!r}; expected one of {_FAMILIES}")
        if self.kind != "heisenberg" and self.rank < 1:
            raise ValueError("rank must be a positive integer")

    @property
    def n_generators(self) -> int:
        if self.kind == "heisenberg":
            return 4
        return 2 * self.rank

    def identity(self):
        if self.kind == "free_abelian":
            return (0,) * self.rank
        if self.kind == "heisenberg":
            return (0, 0, 0)
        return ()

    def generators(self):
        """Symmetric generator list; index 2i is generator i, 2i+1 its inverse."""
        if self.kind == "free_abelian":
            gens = []
            for i in range(self.rank):
                e = [0] * self.rank
                e[i] = 1
                gens.append(tuple(e))
                e[i] = -1
                gens.append(tuple(e))
            return gens
        if self.kind == "heisenberg":
            return [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)]
        # free group: letters; multiplication handled separately
        return list(range(2 * self.rank))

    def multiply(self, g, s_index: int):
        """Right-multiply element g by the s_index-th generator."""
        if self.kind == "free_abelian":
            s = self.generators()[s_index]
            return tuple(a + b for a, b in zip(g, s))
        if self.kind == "heisenberg":
            a, b, c = g
            ap, bp, cp = self.generators()[s_index]
            return (a + ap, b + bp, c + cp + a * bp)
        # free group, letters paired by xor: inverse(x) = x ^ 1
        if g and g[-1] == (s_index ^ 1):
            return g[:-1]
        return g + (s_index,)


@dataclass
class VertexFunction:
    """A complex-valued function on the vertices of a ball, indexed by id."""

    graph: "BallGraph"
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape[0] != self.graph.n_vertices:
            raise ValueError(
                f"function has {self.values.shape[0]} values for a graph "
                f"with {self.graph.n_vertices} vertices"
            )

    def copy(self) -> "VertexFunction":
        return VertexFunction(self.graph, self.values.copy())


def delta(graph: "BallGraph", v: int) -> VertexFunction:
    """The indicator of a single vertex."""
    vals = np.zeros(graph.n_vertices)
    vals[v] = 1.0
    return VertexFunction(graph, vals)


def as_values(graph: "BallGraph", f) -> np.ndarray:
    """Accept a VertexFunction or a bare array and return the value array."""
    if isinstance(f, VertexFunction):
        if f.graph is not graph and f.graph.n_vertices != graph.n_vertices:
            raise ValueError("vertex function belongs to a different graph")
        return f.values
    vals = np.asarray(f)
    if vals.shape[0] != graph.n_vertices:
        raise ValueError("value array length does not match vertex count")
    return vals


@dataclass
class BallGraph:
    """A rooted metric ball of a Cayley graph with its interior/boundary split.

    Adjacency is CSR (indptr/indices) over dense vertex ids; `dist` holds the
    word-metric distance from the root.  `interior` contains exactly the
    vertices all of whose Cayley neighbors lie in the ball; `boundary` is the
    complement inside the ball.
    """

    spec: GroupSpec
    radius: int
    root: int
    dist: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    valence_bound: int
    _labels: list | None = field(default=None, repr=False)
    _tree_parent: np.ndarray | None = field(default=None, repr=False)
    _tree_letter: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.dist)

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def label(self, v: int):
        """Canonical group-element label of a vertex."""
        if self._labels is not None:
            return self._labels[v]
        # free-group path: decode the reduced word by walking parents
        letters = []
        u = v
        while u != self.root:
            letters.append(int(self._tree_letter[u]))
            u = int(self._tree_parent[u])
        return tuple(reversed(letters))

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.interior] = True
        return mask

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Canonically oriented edge list (u, v) with u < v."""
        rows = np.repeat(np.arange(self.n_vertices), np.diff(self.indptr))
        cols = self.indices
        keep = rows < cols
        return rows[keep].astype(np.int64), cols[keep].astype(np.int64)

    @cached_property
    def edge_index(self) -> dict:
        """Map from canonical (u, v) pairs, u < v, to edge ids."""
        eu, ev = self.edges
        return {(int(a), int(b)): i for i, (a, b) in enumerate(zip(eu, ev))}

    def sub_ball_size(self, r: int) -> int:
        """Number of vertices at distance <= r (an id-prefix of this ball)."""
        return int(np.searchsorted(self.dist, r, side="right"))

    def to_json_dict(self, max_vertices: int = 200_000) -> dict:
        if self.n_vertices > max_vertices:
            raise CapExceededError(
                f"refusing to export {self.n_vertices} vertices as JSON "
                f"(limit {max_vertices})"
            )
        eu, ev = self.edges
        return {
            "spec": {"kind": self.spec.kind, "rank": self.spec.rank},
            "radius": self.radius,
            "vertices": [
                {"id": int(v), "label": list(self.label(v)), "dist": int(self.dist[v])}
                for v in range(self.n_vertices)
            ],
            "edges": [[int(a), int(b)] for a, b in zip(eu, ev)],
            "interior": [int(v) for v in self.interior],
            "boundary": [int(v) for v in self.boundary],
        }


def _build_free_group_ball(spec: GroupSpec, radius: int, vertex_cap) -> BallGraph:
    # Trees admit arithmetic indexing: level blocks are contiguous and the
    # j-th vertex of a level has a contiguous child range in the next one.
    # This reproduces generic BFS discovery order without hashing.
    k = spec.rank
    q = 2 * k - 1
    sizes = [1] + [2 * k * q ** (l - 1) for l in range(1, radius + 1)]
    total = sum(sizes)
    if vertex_cap is not None and total > vertex_cap:
        raise CapExceededError(
            f"free-group ball of radius {radius} has {total} vertices, "
            f"exceeding the vertex cap {vertex_cap}"
        )
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n = int(offsets[-1])

    dist = np.empty(n, dtype=np.int32)
    for l in range(radius + 1):
        dist[offsets[l]:offsets[l + 1]] = l

    letter = np.full(n, -1, dtype=np.int8)
    parent = np.empty(n, dtype=np.int64)
    parent[0] = -1
    if radius >= 1:
        letter[offsets[1]:offsets[2]] = np.arange(2 * k, dtype=np.int8)
        parent[offsets[1]:offsets[2]] = 0
    allowed = np.empty((2 * k, q), dtype=np.int8)
    for pl in range(2 * k):
        allowed[pl] = [x for x in range(2 * k) if x != (pl ^ 1)]
    for l in range(2, radius + 1):
        j = np.arange(sizes[l], dtype=np.int64)
        par = offsets[l - 1] + j // q
        parent[offsets[l]:offsets[l + 1]] = par
        letter[offsets[l]:offsets[l + 1]] = allowed[letter[par], j % q]

    deg = np.full(n, 2 * k, dtype=np.int64)
    if radius >= 1:
        deg[offsets[radius]:offsets[radius + 1]] = 1
    else:
        deg[0] = 0
    indptr = np.concatenate([[0], np.cumsum(deg)])
    indices = np.empty(indptr[-1], dtype=np.int64)
    for l in range(radius + 1):
        s, e = int(offsets[l]), int(offsets[l + 1])
        m = e - s
        if l == 0:
            if radius >= 1:
                indices[0:2 * k] = np.arange(offsets[1], offsets[2])
        elif l < radius:
            block = indices[indptr[s]:indptr[e]].reshape(m, 2 * k)
            block[:, 0] = parent[s:e]
            child0 = offsets[l + 1] + np.arange(m, dtype=np.int64)[:, None] * q
            block[:, 1:] = child0 + np.arange(q)
        else:
            indices[indptr[s]:indptr[e]] = parent[s:e]

    interior = np.flatnonzero(dist <= radius - 1) if radius >= 1 else np.array([], dtype=np.int64)
    if radius == 0:
        interior = np.array([], dtype=np.int64)
    boundary = np.setdiff1d(np.arange(n), interior, assume_unique=True)
    return BallGraph(
        spec=spec, radius=radius, root=0, dist=dist,
        indptr=indptr.astype(np.int64), indices=indices,
        interior=interior, boundary=boundary, valence_bound=2 * k,
        _tree_parent=parent, _tree_letter=letter,
    )


def _build_generic_ball(spec: GroupSpec, radius: int, vertex_cap) -> BallGraph:
    identity = spec.identity()
    n_gen = spec.n_generators
    index = {identity: 0}
    labels = [identity]
    dist_list = [0]
    frontier = [identity]
    for r in range(1, radius + 1):
        new_frontier = []
        for g in frontier:
            for s in range(n_gen):
                h = spec.multiply(g, s)
                if h not in index:
                    if vertex_cap is not None and len(labels) >= vertex_cap:
                        raise CapExceededError(
                            f"ball of radius {radius} exceeds the vertex cap {vertex_cap}"
                        )
                    index[h] = len(labels)
                    labels.append(h)
                    dist_list.append(r)
                    new_frontier.append(h)
        frontier = new_frontier

    n = len(labels)
    dist = np.asarray(dist_list, dtype=np.int32)
    nbr_lists = []
    interior_flags = np.empty(n, dtype=bool)
    for v, g in enumerate(labels):
        nbrs = []
        inside = True
        for s in range(n_gen):
            h = spec.multiply(g, s)
            w = index.get(h)
            if w is None:
                inside = False
            else:
                nbrs.append(w)
        nbr_lists.append(nbrs)
        interior_flags[v] = inside
    counts = np.array([len(x) for x in nbr_lists], dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    indices = np.concatenate([np.asarray(x, dtype=np.int64) for x in nbr_lists]) \
        if n and indptr[-1] else np.array([], dtype=np.int64)
    interior = np.flatnonzero(interior_flags)
    boundary = np.flatnonzero(~interior_flags)
    return BallGraph(
        spec=spec, radius=radius, root=0, dist=dist,
        indptr=indptr, indices=indices,
        interior=interior, boundary=boundary, valence_bound=n_gen,
        _labels=labels,
    )


def build_ball(spec: GroupSpec, radius: int, vertex_cap: int | None = DEFAULT_VERTEX_CAP) -> BallGraph:
    """BFS ball of the Cayley graph around the identity.

    Parameters
    ----------
    spec : GroupSpec
    radius : int
        Word-metric radius, >= 0.
    vertex_cap : int or None
        Refuse construction beyond this many vertices (None disables the cap).
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if spec.kind == "free_group":
        return _build_free_group_ball(spec, radius, vertex_cap)
    return _build_generic_ball(spec, radius, vertex_cap)


def distance(graph: BallGraph, x: int, y: int) -> int:
    """BFS graph distance between two vertices of the ball."""
    n = graph.n_vertices
    if not (0 <= x < n) or not (0 <= y < n):
        raise ValueError(f"vertex not in graph (n={n})")
    if x == y:
        return 0
    level = np.full(n, -1, dtype=np.int64)
    level[x] = 0
    frontier = np.array([x], dtype=np.int64)
    d = 0
    while len(frontier):
        d += 1
        nxt = []
        for v in frontier:
            nbrs = graph.neighbors(v)
            fresh = nbrs[level[nbrs] < 0]
            if len(fresh):
                level[fresh] = d
                nxt.append(fresh)
        if not nxt:
            break
        frontier = np.concatenate(nxt)
        if level[y] >= 0:
            return d
    if level[y] < 0:
        raise ValueError("vertices are not connected inside the ball")
    return int(level[y])


def ball_volumes(spec: GroupSpec, r_max: int, vertex_cap: int | None = DEFAULT_VERTEX_CAP) -> np.ndarray:
    """V(r) for r = 0..r_max (cumulative vertex counts of metric balls)."""
    g = build_ball(spec, r_max, vertex_cap=vertex_cap)
    counts = np.bincount(g.dist, minlength=r_max + 1)
    return np.cumsum(counts)


def growth_rate(spec: GroupSpec, r_max: int, vertex_cap: int | None = DEFAULT_VERTEX_CAP) -> float:
    """Polynomial growth exponent of ball volumes, or +inf when superpolynomial.

    Fits the log-log slope of V(r) over r in [r_max/2, r_max].  Returns
    math.inf when an exponential fit explains the data better than any
    power law and the local slope is still increasing at r_max.
    """
    if r_max < 4:
        raise ValueError("r_max must be at least 4")
    vols = ball_volumes(spec, r_max, vertex_cap=vertex_cap)
    rs = np.arange(max(2, r_max // 2), r_max + 1)
    lv = np.log(vols[rs])
    lr = np.log(rs)
    slope, inter = np.polyfit(lr, lv, 1)
    power_resid = np.sum((lv - (slope * lr + inter)) ** 2)
    eslope, einter = np.polyfit(rs, lv, 1)
    exp_resid = np.sum((lv - (eslope * rs + einter)) ** 2)
    # local slope at the two window ends, from consecutive volumes
    lo, hi = rs[0], rs[-1]
    slope_lo = (math.log(vols[lo + 1]) - math.log(vols[lo - 1])) / (math.log(lo + 1) - math.log(lo - 1))
    slope_hi = (math.log(vols[hi]) - math.log(vols[hi - 2])) / (math.log(hi) - math.log(hi - 2))
    if exp_resid < 0.5 * power_resid and slope_hi > slope_lo + 0.2:
        return math.inf
    return float(slope)
