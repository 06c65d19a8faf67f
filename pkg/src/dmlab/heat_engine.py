"""Heat semigroups exp(-t Delta_sigma) on ball graphs with explicit error budgets.

Three evaluation methods are provided.

series
    Taylor series with the term recurrence term_{n+1} = (-t/(n+1)) A term_n,
    summed in ascending order.  Truncation after N terms is certified by the
    tail bound exp(t c) (t c)^{N+1} / (N+1)!  with c an operator-norm bound.
    Because powers of the Laplacian propagate at one edge per order, the first
    N terms on a ball of radius R agree exactly with the infinite graph at all
    vertices within distance R - N of the root, which is where infinite-graph
    claims are certified ("infinite" scope).  "ball" scope computes the ball
    semigroup itself, with tail-only certification.

resolvent_power
    (I + (t/n) A)^{-n} via n sparse triangular solves after one factorization.
    Its certified error adds the scalar time-discretization bound
    max_x |exp(-x) - (1 + x/n)^{-n}| over the spectral interval.

spectral_window
    Lanczos quadrature of the spectral measure on the Dirichlet ball; intended
    for long times where the series is refused.  See spectral_window_diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BudgetError, CapExceededError
from .graph_core import BallGraph, VertexFunction, as_values, delta
from .magnetic_ops import (
    Multiplier,
    Potential,
    SparseHermitian,
    _cached_operator,
    dirichlet_matrix,
    operator_norm_bound,
    schrodinger_matrix,
)

SERIES_OVERFLOW_THRESHOLD = 700.0

_METHODS = ("series", "resolvent_power", "spectral_window")


@dataclass
class HeatRequest:
    """How to evaluate exp(-t Delta_sigma) and to what accuracy."""

    t: float
    err_budget: float
    method: str = "series"
    n: int = 1024            # resolvent_power steps; must be a power of two
    k: int = 64              # spectral_window Lanczos steps
    overflow_threshold: float = SERIES_OVERFLOW_THRESHOLD

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("time must be nonnegative")
        if self.err_budget <= 0:
            raise ValueError("err_budget must be positive")
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {_METHODS}")
        if self.method == "resolvent_power" and (self.n < 1 or self.n & (self.n - 1)):
            raise ValueError("resolvent_power step count must be a power of two")


@dataclass
class KernelSlice:
    """One row of a heat kernel: p_t(x, .) with its certification record.

    `certified_error` bounds the entrywise deviation from the infinite-graph
    kernel at vertices within `certified_radius` of the root (scope
    "infinite"); with scope "ball" it bounds the deviation from the ball
    semigroup everywhere.  For trivial sigma, entries smaller than the
    certified error are only known to lie in [0, certified_error].
    """

    graph: BallGraph = field(repr=False)
    x: int
    t: float
    values: np.ndarray = field(repr=False)
    certified_error: float
    certified_radius: int | None
    sigma_label: str = "trivial"
    method: str = "series"

    def value_interval(self, y: int) -> tuple[float, float]:
        v = self.values[y]
        e = self.certified_error
        if self.sigma_label == "trivial":
            re = float(np.real(v))
            if re < e:
                return (0.0, e)
            return (re - e, re + e)
        a = abs(v)
        return (max(a - e, 0.0), a + e)


def truncation_radius(t: float, c: float, err: float, max_terms: int | None = None) -> int:
    """Smallest N with exp(tc) (tc)^{N+1} / (N+1)! < err.

    The first N series terms on a radius-N ball reproduce the infinite graph
    exactly, so this N doubles as the required truncation radius.
    """
    if t < 0 or c < 0:
        raise ValueError("t and c must be nonnegative")
    if err <= 0:
        raise ValueError("err must be positive")
    x = t * c
    if x == 0.0:
        return 0
    ln_err = math.log(err)
    # ln of exp(x) x^{N+1} / (N+1)! at N = 0, then incremental updates
    ln_tail = x + math.log(x)
    n = 0
    while ln_tail >= ln_err:
        n += 1
        ln_tail += math.log(x) - math.log(n + 1)
        if max_terms is not None and n > max_terms:
            raise CapExceededError(
                f"series truncation needs more than {max_terms} terms; "
                "use the spectral_window method")
    return n


def series_tail_bound(t: float, c: float, n_terms: int) -> float:
    """exp(tc) (tc)^{N+1} / (N+1)! evaluated in log space."""
    x = t * c
    if x == 0.0:
        return 0.0
    return math.exp(x + (n_terms + 1) * math.log(x) - math.lgamma(n_terms + 2))


def resolvent_power_error(t: float, c: float, n: int, grid: int = 4001) -> float:
    """max over [0, tc] of |exp(-x) - (1 + x/n)^{-n}| (scalar spectral bound)."""
    x = np.linspace(0.0, t * c, grid)
    approx = np.exp(-n * np.log1p(x / n))
    return float(np.max(np.abs(np.exp(-x) - approx)))


def _series_apply(mat, t: float, vals: np.ndarray, n_terms: int) -> np.ndarray:
    out = vals.astype(mat.dtype if np.iscomplexobj(mat.data) else vals.dtype, copy=True)
    term = out.copy()
    for n in range(1, n_terms + 1):
        term = mat @ term
        term *= (-t) / n
        out += term
    return out


def _support_radius(graph: BallGraph, vals: np.ndarray) -> int:
    flat = np.abs(vals if vals.ndim == 1 else vals).reshape(len(vals), -1).max(axis=1)
    support = np.flatnonzero(flat > 0)
    if len(support) == 0:
        return 0
    return int(graph.dist[support].max())


def heat_apply(graph: BallGraph, sigma: Multiplier | None, req: HeatRequest, f,
               potential: Potential | None = None, certify: str = "infinite") -> VertexFunction:
    """Approximate exp(-t (Delta_sigma [+T])) f within the requested budget.

    certify="infinite" requires the ball to be large enough that the result
    is certified for the infinite graph on the inner region; certify="ball"
    computes the ball semigroup (used where ball surrogates are the object
    of study, e.g. exhaustion-based checks).
    """
    vals = as_values(graph, f)
    if req.t == 0.0:
        return VertexFunction(graph, vals.copy())
    if certify not in ("infinite", "ball"):
        raise ValueError("certify must be 'infinite' or 'ball'")
    if potential is None:
        op = _cached_operator(graph, sigma)
        mat = op.matrix
    else:
        mat = schrodinger_matrix(graph, sigma, potential).matrix
    c = operator_norm_bound(graph, potential)

    if req.method == "series":
        if req.t * c > req.overflow_threshold:
            raise BudgetError(
                f"t*c = {req.t * c:.1f} exceeds the series overflow threshold "
                f"{req.overflow_threshold}; use the spectral_window method")
        n_terms = truncation_radius(req.t, c, req.err_budget)
        if certify == "infinite":
            needed = n_terms + _support_radius(graph, vals)
            if graph.radius < needed:
                raise BudgetError(
                    f"budget {req.err_budget} not certifiable on a radius-"
                    f"{graph.radius} ball; required radius {needed}",
                    required_radius=needed)
        out = _series_apply(mat, req.t, vals, n_terms)
        return VertexFunction(graph, out)

    if req.method == "resolvent_power":
        n = req.n
        ident = sp.identity(mat.shape[0], dtype=mat.dtype, format="csr")
        lu = spla.splu((ident + (req.t / n) * mat).tocsc())
        out = vals.astype(mat.dtype if np.iscomplexobj(mat.data) else float, copy=True)
        for _ in range(n):
            out = lu.solve(out)
        return VertexFunction(graph, out)

    # spectral_window: Lanczos exp action on the Dirichlet compression
    dir_op = dirichlet_matrix(graph, sigma)
    dmat = dir_op.matrix
    if potential is not None:
        dmat = dmat + sp.diags(potential.values[dir_op.vertex_ids])
    v0 = vals[dir_op.vertex_ids].astype(dmat.dtype if np.iscomplexobj(dmat.data) else float)
    norm0 = np.linalg.norm(v0)
    full = np.zeros(graph.n_vertices, dtype=v0.dtype)
    if norm0 > 0:
        alphas, betas, vecs = _lanczos(dmat, v0 / norm0, req.k)
        theta, u = _tridiag_eigh(alphas, betas)
        coeff = u @ (np.exp(-req.t * theta) * u[0, :]) * norm0
        full[dir_op.vertex_ids] = vecs.T @ coeff
    return VertexFunction(graph, full)


def heat_certified_error(graph: BallGraph, req: HeatRequest, potential: Potential | None = None) -> float:
    """Certified error actually achieved by a request on this graph."""
    c = operator_norm_bound(graph, potential)
    if req.method == "series":
        n_terms = truncation_radius(req.t, c, req.err_budget)
        return series_tail_bound(req.t, c, n_terms)
    if req.method == "resolvent_power":
        return resolvent_power_error(req.t, c, req.n)
    raise ValueError("spectral_window errors are reported by spectral_window_diagonal")


def kernel_slice(graph: BallGraph, sigma: Multiplier | None, x: int, t: float,
                 err: float, method: str = "series", certify: str = "infinite") -> KernelSlice:
    """Heat kernel row p_t(x, .) via heat_apply on a vertex indicator."""
    req = HeatRequest(t=t, err_budget=err, method=method)
    out = heat_apply(graph, sigma, req, delta(graph, x), certify=certify)
    c = operator_norm_bound(graph)
    certified_radius = None
    if method == "series":
        n_terms = truncation_radius(t, c, err)
        cert = series_tail_bound(t, c, n_terms)
        if certify == "infinite":
            # every length-<=N path from x stays inside the ball, so all
            # entries of the first N terms are exact for the infinite graph
            certified_radius = graph.radius
    elif method == "resolvent_power":
        cert = resolvent_power_error(t, c, req.n)
    else:
        cert = math.nan  # reported by spectral_window_diagonal instead
    label = "trivial" if sigma is None or sigma.is_trivial() else f"flux={sigma.flux}"
    return KernelSlice(graph, x, t, out.values, cert, certified_radius, label, method)


def domination_check(graph: BallGraph, sigma: Multiplier, t: float, f,
                     err_budget: float = 1e-10, certify: str = "ball"):
    """Pointwise |exp(-t Delta_sigma) f| versus exp(-t Delta) |f|.

    Returns the pair (lhs, rhs) as real arrays; the domination contract is
    lhs <= rhs + 2 * err_budget everywhere on the ball.
    """
    vals = as_values(graph, f)
    req = HeatRequest(t=t, err_budget=err_budget)
    lhs = np.abs(heat_apply(graph, sigma, req, vals, certify=certify).values)
    rhs = np.real(heat_apply(graph, None, req, np.abs(vals), certify=certify).values)
    return lhs, rhs


def schrodinger_heat_trace(graph: BallGraph, sigma: Multiplier | None, potential: Potential,
                           t: float, err: float, lambda0_estimate: float = 0.0,
                           method: str = "auto", k: int = 64,
                           allow_unstable: bool = False) -> float:
    """Root diagonal entry of exp(-t (Delta_sigma + T)), the m=1 trace.

    The potential must satisfy T >= -lambda0_estimate unless allow_unstable
    is set (exploratory use).
    """
    if potential.values.min() < -lambda0_estimate - 1e-12 and not allow_unstable:
        raise ValueError(
            "potential falls below -lambda0; pass allow_unstable=True to override")
    c = operator_norm_bound(graph, potential)
    if method == "auto":
        method = "series" if t * c <= SERIES_OVERFLOW_THRESHOLD and \
            graph.radius >= truncation_radius(t, c, err) else "spectral_window"
    if method == "series":
        req = HeatRequest(t=t, err_budget=err, method="series")
        out = heat_apply(graph, sigma, req, delta(graph, graph.root), potential=potential)
        return float(np.real(out.values[graph.root]))
    value, _ = spectral_window_diagonal(graph, sigma, graph.root, t, k, potential=potential)
    return value


def _lanczos(mat, v0: np.ndarray, k: int, breakdown: float = 1e-10):
    """Lanczos with full reorthogonalization; stops early on breakdown."""
    n = mat.shape[0]
    k = min(k, n)
    vecs = np.empty((k, n), dtype=v0.dtype)
    vecs[0] = v0
    alphas, betas = [], []
    for j in range(k):
        w = mat @ vecs[j]
        a = float(np.real(np.vdot(vecs[j], w)))
        alphas.append(a)
        w = w - a * vecs[j]
        if j > 0:
            w = w - betas[-1] * vecs[j - 1]
        # full reorthogonalization, twice for safety
        for _ in range(2):
            coeff = vecs[:j + 1].conj() @ w
            w -= vecs[:j + 1].T @ coeff
        b = float(np.linalg.norm(w))
        if j == k - 1 or b < breakdown:
            return np.asarray(alphas), np.asarray(betas), vecs[:j + 1]
        betas.append(b)
        vecs[j + 1] = w / b
    return np.asarray(alphas), np.asarray(betas), vecs


def _tridiag_eigh(alphas: np.ndarray, betas: np.ndarray):
    from scipy.linalg import eigh_tridiagonal
    if len(alphas) == 1:
        return np.array([alphas[0]]), np.array([[1.0]])
    return eigh_tridiagonal(np.asarray(alphas, dtype=float), np.asarray(betas, dtype=float))


def spectral_measure_quadrature(graph: BallGraph, sigma: Multiplier | None, x: int,
                                k: int, potential: Potential | None = None):
    """Gauss quadrature (nodes, weights, saturated) of the Dirichlet spectral
    measure of the vertex indicator at x.

    When the Krylov space saturates (an invariant subspace, e.g. radial
    functions on a tree seeded at the root), the nodes and weights are the
    exact eigenvalues and spectral weights carried by x and the quadrature
    is exact; `saturated` reports this.
    """
    dir_op = dirichlet_matrix(graph, sigma)
    pos = dir_op.position_of(x)
    if pos < 0:
        raise ValueError(f"vertex {x} is not interior; no Dirichlet row")
    dmat = dir_op.matrix
    if potential is not None:
        dmat = dmat + sp.diags(potential.values[dir_op.vertex_ids])
    v0 = np.zeros(dmat.shape[0], dtype=complex if np.iscomplexobj(dmat.data) else float)
    v0[pos] = 1.0
    alphas, betas, _ = _lanczos(dmat, v0, k)
    saturated = len(alphas) < k or len(alphas) == dmat.shape[0]
    theta, u = _tridiag_eigh(alphas, betas)
    weights = np.abs(u[0, :]) ** 2
    return theta, weights, saturated


def spectral_window_diagonal(graph: BallGraph, sigma: Multiplier | None, x: int,
                             t: float, k: int, potential: Potential | None = None,
                             lambda_shift: float = 0.0):
    """Diagonal kernel entry exp(lambda_shift t) p_t(x, x) on the Dirichlet ball.

    Returns (value, remainder_bound).  The value is the k-node spectral
    quadrature sum_j w_j exp(-(theta_j - lambda_shift) t); the remainder
    bound covers the uncaptured spectral mass and vanishes when the Krylov
    space saturated (the quadrature is then exact).
    """
    theta, weights, saturated = spectral_measure_quadrature(graph, sigma, x, k, potential)
    value = float(np.sum(weights * np.exp(-(theta - lambda_shift) * t)))
    if saturated:
        remainder = 0.0
    else:
        uncaptured = max(0.0, 1.0 - float(weights.sum()))
        remainder = uncaptured * math.exp(-(theta[-1] - lambda_shift) * t) + \
            value * math.exp(-(theta[-1] - theta[0]) * t)
    return value, remainder
