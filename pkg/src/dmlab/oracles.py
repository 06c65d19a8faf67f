"""Independent reference values used to check the graph machinery.

Every oracle here is computed by a route that never touches the ball-graph
code: closed forms, scalar power series, Brillouin-zone minimization, and
numerical quadrature of lattice integrals.
"""

from __future__ import annotations

import math

import numpy as np


def bessel_i_series(nu: int, z: float, tol: float = 1e-16) -> float:
    """Modified Bessel function I_nu(z) by direct power-series summation."""
    if nu < 0:
        nu = -nu
    term = (z / 2.0) ** nu / math.factorial(nu)
    total = term
    k = 0
    while abs(term) > tol * abs(total) + 1e-300:
        k += 1
        term *= (z * z / 4.0) / (k * (k + nu))
        total += term
        if k > 10_000:
            raise RuntimeError("Bessel series failed to converge")
    return total


def bessel_zd(d: int, t: float, offsets=None) -> float:
    """Heat kernel entry p_t(x, y) on Z^d: exp(-2 d t) prod_i I_{|x_i-y_i|}(2t)."""
    if offsets is None:
        offsets = (0,) * d
    if len(offsets) != d:
        raise ValueError("need one offset per coordinate")
    value = math.exp(-2.0 * d * t)
    for m in offsets:
        value *= bessel_i_series(abs(int(m)), 2.0 * t)
    return value


def kesten_tree(degree: int) -> float:
    """Bottom of the Laplacian spectrum on the degree-regular tree: d - 2 sqrt(d-1)."""
    if degree < 2:
        raise ValueError("degree must be at least 2")
    return degree - 2.0 * math.sqrt(degree - 1.0)


def harper_bloch_matrix(alpha_num: int, alpha_den: int, k1: float, k2: float) -> np.ndarray:
    """q x q Bloch matrix of the Harper Laplacian 4I - hopping at flux p/q."""
    q = alpha_den
    alpha = alpha_num / alpha_den
    H = np.zeros((q, q), dtype=complex)
    for j in range(q):
        H[j, j] = 4.0 - 2.0 * math.cos(k2 + 2.0 * math.pi * alpha * j)
        jp = (j + 1) % q
        hop = -1.0 * (np.exp(1j * k1 * q) if jp != j + 1 else 1.0)
        H[j, jp] += hop
        H[jp, j] += np.conj(hop)
    return H


def harper_bloch(alpha_num: int, alpha_den: int, n_grid: int = 96):
    """(min, max) of the Harper Laplacian spectrum from a Brillouin-zone grid."""
    q = alpha_den
    lo, hi = math.inf, -math.inf
    for k1 in np.linspace(0.0, 2.0 * math.pi / q, n_grid, endpoint=False):
        for k2 in np.linspace(0.0, 2.0 * math.pi, n_grid, endpoint=False):
            ev = np.linalg.eigvalsh(harper_bloch_matrix(alpha_num, alpha_den, k1, k2))
            lo = min(lo, ev[0])
            hi = max(hi, ev[-1])
    return float(lo), float(hi)


def green_logdet(d: int) -> float:
    """ln det of the Z^d Laplacian: (2 pi)^{-d} integral of ln(2d - 2 sum cos)."""
    from scipy.integrate import quad
    if d == 1:
        # integrable log singularity at 0; integrate 2 ln(2 sin(theta/2))
        val, _ = quad(lambda th: 2.0 * math.log(2.0 * math.sin(th / 2.0)),
                      0.0, math.pi, limit=200)
        return val / math.pi
    if d == 2:
        # inner integral in closed form: (1/2pi) int ln(a - 2 cos) = ln((a + sqrt(a^2-4))/2)
        def outer(th):
            a = 4.0 - 2.0 * math.cos(th)
            return math.log((a + math.sqrt(a * a - 4.0)) / 2.0)
        val, _ = quad(outer, 0.0, 2.0 * math.pi, limit=400)
        return val / (2.0 * math.pi)
    raise ValueError("green_logdet implemented for d in {1, 2}")


def z1_density(lam: float) -> float:
    """Integrated density of states of the Z Laplacian: arccos(1 - lam/2) / pi."""
    if lam <= 0.0:
        return 0.0
    if lam >= 4.0:
        return 1.0
    return math.acos(1.0 - lam / 2.0) / math.pi


def free_group_ball_volume(k: int, r: int) -> int:
    """Exact vertex count of the radius-r ball in F_k: 1 + 2k((2k-1)^r - 1)/(2k-2)."""
    if r == 0:
        return 1
    q = 2 * k - 1
    return 1 + 2 * k * (q ** r - 1) // (q - 1)


def path_dirichlet_lowest(n_interior: int) -> float:
    """Lowest Dirichlet eigenvalue of a path with n interior vertices."""
    return 2.0 - 2.0 * math.cos(math.pi / (n_interior + 1))


def oracle(kind: str, **params):
    """Dispatch by name; mirrors the CLI oracle subcommand."""
    if kind == "bessel_zd":
        return bessel_zd(params["d"], params["t"], params.get("offsets"))
    if kind == "kesten_tree":
        return kesten_tree(params["degree"])
    if kind == "harper_bloch":
        return harper_bloch(params["num"], params["den"], params.get("n_grid", 96))
    if kind == "green_logdet":
        return green_logdet(params["d"])
    raise ValueError(f"unknown oracle kind {kind!r}")
