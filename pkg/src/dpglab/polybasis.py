"""Reference-element polynomial bases and quadrature.

Reference triangle is {(x, y): x, y >= 0, x + y <= 1}; reference edge is [0, 1].
The triangle basis is the Dubiner (collapsed-coordinate Jacobi) basis,
normalized to be L2-orthonormal on the reference triangle and ordered by
total degree, so the first dim P_k functions span P_k.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import mpmath
import numpy as np
from numpy.polynomial import legendre
from scipy.special import eval_jacobi

MAX_QUADRATURE_DEGREE = 60

# reference triangle vertices, counterclockwise
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 2) on the triangle, (nq,) on the edge
    weights: np.ndarray
    degree: int

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=None)
def _gauss_nodes(n, family, alpha=0, beta=0):
    # nodes from 40-digit arithmetic: double-precision solvers lose ~1e-13 at n ~ 25
    with mpmath.workdps(40):
        x, w = mpmath.mp.gauss_quadrature(n, family, alpha, beta)
        return np.array([float(v) for v in x]), np.array([float(v) for v in w])


def _gauss_legendre01(n):
    return _gauss_nodes(n, "legendre01")


@lru_cache(maxsize=None)
def edge_quadrature(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of ``degree``."""
    if degree < 0:
        raise ValueError("quadrature degree must be >= 0")
    if degree > MAX_QUADRATURE_DEGREE:
        raise ValueError(
            f"edge quadrature degree {degree} exceeds the maximum {MAX_QUADRATURE_DEGREE}"
        )
    n = degree // 2 + 1
    x, w = _gauss_legendre01(n)
    return QuadratureRule(x, w, degree)


@lru_cache(maxsize=None)
def tri_quadrature(degree: int) -> QuadratureRule:
    """Collapsed (Duffy) Gauss rule on the reference triangle.

    Gauss-Legendre in the first collapsed direction and Gauss-Jacobi with
    weight (1 - w) in the second, so the rule has positive weights and is
    exact up to ``degree``.
    """
    if degree < 0:
        raise ValueError("quadrature degree must be >= 0")
    if degree > MAX_QUADRATURE_DEGREE:
        raise ValueError(
            f"triangle quadrature degree {degree} exceeds the maximum {MAX_QUADRATURE_DEGREE}"
        )
    n = degree // 2 + 1
    u, wu = _gauss_legendre01(n)
    z, wz = _gauss_nodes(n, "jacobi", 1, 0)
    w = 0.5 * (z + 1.0)
    ww = wz / 4.0
    U, W = np.meshgrid(u, w, indexing="ij")
    pts = np.column_stack([(U * (1.0 - W)).ravel(), W.ravel()])
    wts = np.outer(wu, ww).ravel()
    return QuadratureRule(pts, wts, degree)


def monomial_integral_triangle(a: int, b: int) -> float:
    """Exact value of the integral of x^a y^b over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def tri_dim(k: int) -> int:
    return (k + 1) * (k + 2) // 2


def _dubiner_indices(k):
    return [(i, d - i) for d in range(k + 1) for i in range(d + 1)]


def _dubiner_raw(k, pts):
    """Unnormalized Dubiner values and gradients, shape (dim, nq) and (dim, nq, 2)."""
    x = pts[:, 0]
    y = pts[:, 1]
    s = 2.0 * x + y - 1.0
    t = 1.0 - y
    nq = len(x)
    # Q_i = t^i P_i(s / t), a polynomial in (s, t)
    Q = np.zeros((k + 1, nq))
    Qs = np.zeros((k + 1, nq))
    Qt = np.zeros((k + 1, nq))
    Q[0] = 1.0
    if k >= 1:
        Q[1] = s
        Qs[1] = 1.0
    for i in range(1, k):
        c1 = (2 * i + 1) / (i + 1)
        c2 = i / (i + 1)
        Q[i + 1] = c1 * s * Q[i] - c2 * t * t * Q[i - 1]
        Qs[i + 1] = c1 * (Q[i] + s * Qs[i]) - c2 * t * t * Qs[i - 1]
        Qt[i + 1] = c1 * s * Qt[i] - c2 * (2.0 * t * Q[i - 1] + t * t * Qt[i - 1])
    z = 2.0 * y - 1.0
    idx = _dubiner_indices(k)
    vals = np.empty((len(idx), nq))
    grads = np.empty((len(idx), nq, 2))
    for n, (i, j) in enumerate(idx):
        alpha = 2 * i + 1
        R = eval_jacobi(j, alpha, 0.0, z)
        if j > 0:
            dR = (j + alpha + 1) * eval_jacobi(j - 1, alpha + 1, 1.0, z)
        else:
            dR = np.zeros(nq)
        dQx = 2.0 * Qs[i]
        dQy = Qs[i] - Qt[i]
        vals[n] = Q[i] * R
        grads[n, :, 0] = dQx * R
        grads[n, :, 1] = dQy * R + Q[i] * dR
    return vals, grads


@lru_cache(maxsize=None)
def _dubiner_scale(k):
    rule = tri_quadrature(2 * k)
    vals, _ = _dubiner_raw(k, rule.points)
    return 1.0 / np.sqrt(vals**2 @ rule.weights)


class TriBasis:
    """L2-orthonormal modal basis of P_k on the reference triangle."""

    def __init__(self, k: int):
        if k < 0:
            raise ValueError("degree must be >= 0")
        self.degree = k
        self.dim = tri_dim(k)
        self._scale = _dubiner_scale(k)

    def eval(self, pts):
        """Values, shape (dim, npts)."""
        vals, _ = _dubiner_raw(self.degree, np.atleast_2d(pts))
        return vals * self._scale[:, None]

    def grad(self, pts):
        """Reference gradients, shape (dim, npts, 2)."""
        _, grads = _dubiner_raw(self.degree, np.atleast_2d(pts))
        return grads * self._scale[:, None, None]

    def eval_grad(self, pts):
        vals, grads = _dubiner_raw(self.degree, np.atleast_2d(pts))
        return vals * self._scale[:, None], grads * self._scale[:, None, None]


class EdgeBasis:
    """Shifted Legendre polynomials, orthonormal in L2(0, 1)."""

    def __init__(self, k: int):
        if k < 0:
            raise ValueError("degree must be >= 0")
        self.degree = k
        self.dim = k + 1
        self._coef = [np.sqrt(2 * n + 1) * np.eye(k + 1)[n] for n in range(k + 1)]

    def eval(self, s):
        z = 2.0 * np.asarray(s, dtype=float) - 1.0
        return np.array([legendre.legval(z, c) for c in self._coef])

    def deriv(self, s):
        z = 2.0 * np.asarray(s, dtype=float) - 1.0
        return np.array([2.0 * legendre.legval(z, legendre.legder(c)) for c in self._coef])


class RTBasis:
    """Raviart-Thomas space RT_k on the reference triangle.

    Shape functions are P_k^2 (componentwise orthonormal scalar basis)
    followed by x * m for the homogeneous monomials m of degree k, giving
    (k + 1)(k + 3) functions. Map to physical elements with the
    contravariant Piola transform.
    """

    def __init__(self, k: int):
        if k < 0:
            raise ValueError("degree must be >= 0")
        self.degree = k
        self.scalar = TriBasis(k)
        self.dim = (k + 1) * (k + 3)

    def eval_div(self, pts):
        """Values (dim, npts, 2) and reference divergence (dim, npts)."""
        pts = np.atleast_2d(pts)
        k = self.degree
        nq = len(pts)
        vals = np.zeros((self.dim, nq, 2))
        div = np.zeros((self.dim, nq))
        phi, dphi = self.scalar.eval_grad(pts)
        n = self.scalar.dim
        vals[:n, :, 0] = phi
        vals[n : 2 * n, :, 1] = phi
        div[:n] = dphi[:, :, 0]
        div[n : 2 * n] = dphi[:, :, 1]
        x, y = pts[:, 0], pts[:, 1]
        for j in range(k + 1):
            m = x ** (k - j) * y**j
            vals[2 * n + j, :, 0] = x * m
            vals[2 * n + j, :, 1] = y * m
            div[2 * n + j] = (k + 2) * m
        return vals, div

    def normal_trace_moments(self, edge: int) -> np.ndarray:
        """Moments of the reference normal trace on local ``edge`` against EdgeBasis(k).

        Edge e runs from reference vertex e to vertex (e + 1) % 3; the
        normal is the unit outward normal. Shape (k + 1, dim).
        """
        k = self.degree
        a, b = REF_VERTICES[edge], REF_VERTICES[(edge + 1) % 3]
        tangent = b - a
        length = np.hypot(*tangent)
        normal = np.array([tangent[1], -tangent[0]]) / length
        rule = edge_quadrature(2 * k + 1)
        pts = a + rule.points[:, None] * tangent
        vals, _ = self.eval_div(pts)
        trace = vals @ normal
        eb = EdgeBasis(k).eval(rule.points)
        return length * (eb * rule.weights) @ trace.T


def tri_basis(k: int) -> TriBasis:
    return TriBasis(k)


def edge_basis(k: int) -> EdgeBasis:
    return EdgeBasis(k)


def rt_basis(k: int) -> RTBasis:
    return RTBasis(k)


def edge_points(edge: int, t) -> np.ndarray:
    """Reference-triangle points at parameter t along local ``edge``."""
    a, b = REF_VERTICES[edge], REF_VERTICES[(edge + 1) % 3]
    return a + np.asarray(t)[:, None] * (b - a)
