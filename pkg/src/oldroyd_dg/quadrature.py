"""Quadrature rules and modal polynomial bases on the reference triangle.

The reference triangle is ``{(x, y) : x >= 0, y >= 0, x + y <= 1}`` with
area 1/2; the reference edge is the interval [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_EXACTNESS = 40


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadRule:
    """Points and positive weights of a quadrature rule.

    Attributes
    ----------
    points : ndarray
        Reference coordinates, shape (nq, 2) on the triangle or (nq,) on the
        edge.
    weights : ndarray
        Weights, shape (nq,). They sum to the reference measure.
    exactness : int
        Polynomials of total degree up to this value are integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    exactness: int

    @property
    def n_points(self) -> int:
        return len(self.weights)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def _check_exactness(min_exactness: int) -> None:
    if min_exactness < 0:
        raise QuadratureError(f"exactness must be >= 0, got {min_exactness}")
    if min_exactness > MAX_EXACTNESS:
        raise QuadratureError(
            f"exactness {min_exactness} exceeds the supported maximum {MAX_EXACTNESS}"
        )


@lru_cache(maxsize=None)
def edge_rule(min_exactness: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1] exact to degree ``min_exactness``."""
    _check_exactness(min_exactness)
    n = min_exactness // 2 + 1
    s, w = np.polynomial.legendre.leggauss(n)
    pts = 0.5 * (s + 1.0)
    pts.setflags(write=False)
    wts = 0.5 * w
    wts.setflags(write=False)
    return QuadRule(pts, wts, 2 * n - 1)


@lru_cache(maxsize=None)
def triangle_rule(min_exactness: int) -> QuadRule:
    """Collapsed (Stroud conical product) rule on the reference triangle.

    Uses Gauss-Jacobi(1, 0) points in the collapsed direction and
    Gauss-Legendre in the other, so all weights are positive. One point
    gives the centroid rule.
    """
    _check_exactness(min_exactness)
    n = min_exactness // 2 + 1
    # x = a on [0,1] with weight (1 - a); y = b (1 - a), b on [0,1]
    ja, jw = roots_jacobi(n, 1.0, 0.0)
    a = 0.5 * (ja + 1.0)
    wa = jw / 4.0
    lb, lw = np.polynomial.legendre.leggauss(n)
    b = 0.5 * (lb + 1.0)
    wb = 0.5 * lw
    A, B = np.meshgrid(a, b, indexing="ij")
    pts = np.column_stack([A.ravel(), (B * (1.0 - A)).ravel()])
    wts = np.outer(wa, wb).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts, 2 * n - 1)


def monomial_exponents(degree: int) -> list[tuple[int, int]]:
    """Exponents (a, b) of x^a y^b with a + b <= degree, graded order."""
    return [(k - j, j) for k in range(degree + 1) for j in range(k + 1)]


def n_basis(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


def _monomials(degree: int, pts: np.ndarray) -> np.ndarray:
    x, y = pts[..., 0], pts[..., 1]
    return np.stack([x**a * y**b for a, b in monomial_exponents(degree)], axis=-1)


def _monomial_grads(degree: int, pts: np.ndarray) -> np.ndarray:
    x, y = pts[..., 0], pts[..., 1]
    out = []
    for a, b in monomial_exponents(degree):
        dx = a * x ** max(a - 1, 0) * y**b if a > 0 else np.zeros_like(x)
        dy = b * x**a * y ** max(b - 1, 0) if b > 0 else np.zeros_like(x)
        out.append(np.stack([dx, dy], axis=-1))
    return np.stack(out, axis=-2)


@dataclass(frozen=True)
class PolyBasis:
    """Modal basis of P_r on the reference triangle.

    Each basis function is ``sum_k coeffs[k, i] * m_k`` with ``m_k`` the
    graded monomials. With the default ``coeffs`` (from :func:`reference_basis`)
    the functions are L2-orthonormal on the reference triangle and the first
    one is constant.
    """

    degree: int
    coeffs: np.ndarray

    @property
    def n_funcs(self) -> int:
        return n_basis(self.degree)

    def eval(self, pts: np.ndarray) -> np.ndarray:
        """Values at reference points, shape (..., n_funcs)."""
        return _monomials(self.degree, np.asarray(pts, dtype=float)) @ self.coeffs

    def eval_grad(self, pts: np.ndarray) -> np.ndarray:
        """Reference gradients, shape (..., n_funcs, 2)."""
        g = _monomial_grads(self.degree, np.asarray(pts, dtype=float))
        return np.einsum("...kd,ki->...id", g, self.coeffs)


def monomial_basis(degree: int) -> PolyBasis:
    return PolyBasis(degree, np.eye(n_basis(degree)))


@lru_cache(maxsize=None)
def reference_basis(degree: int) -> PolyBasis:
    """Gram-Schmidt orthonormalization of the monomials on the reference triangle."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    rule = triangle_rule(2 * degree)
    m = _monomials(degree, rule.points)
    gram = m.T @ (rule.weights[:, None] * m)
    # Cholesky gram = L L^T; columns of L^{-T} give the Gram-Schmidt basis
    L = np.linalg.cholesky(gram)
    coeffs = np.linalg.inv(L).T
    # a second pass removes the roundoff the monomial Gram matrix leaves behind
    v = m @ coeffs
    L2 = np.linalg.cholesky(v.T @ (rule.weights[:, None] * v))
    coeffs = coeffs @ np.linalg.inv(L2).T
    coeffs.setflags(write=False)
    return PolyBasis(degree, coeffs)


@dataclass(frozen=True)
class ElementBasis:
    """An L2(K)-orthonormal basis on a physical affine triangle.

    Physical function i is ``coeffs`` applied to the seed basis composed
    with the inverse affine map ``x = v0 + jac @ xi``.
    """

    seed: PolyBasis
    coeffs: np.ndarray
    v0: np.ndarray
    jac: np.ndarray

    @property
    def n_funcs(self) -> int:
        return self.seed.n_funcs

    def to_reference(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.jac, (np.asarray(x, float) - self.v0).T).T

    def eval_ref(self, xi: np.ndarray) -> np.ndarray:
        return self.seed.eval(xi) @ self.coeffs

    def eval_grad_ref(self, xi: np.ndarray) -> np.ndarray:
        """Physical gradients at reference points, shape (..., n_funcs, 2)."""
        g = np.einsum("...kd,ki->...id", self.seed.eval_grad(xi), self.coeffs)
        return g @ np.linalg.inv(self.jac)

    def eval(self, x: np.ndarray) -> np.ndarray:
        return self.eval_ref(self.to_reference(x))

    def eval_grad(self, x: np.ndarray) -> np.ndarray:
        return self.eval_grad_ref(self.to_reference(x))


def orthonormalize_on_element(basis: PolyBasis, vertices: np.ndarray) -> ElementBasis:
    """Orthonormalize ``basis`` in L2(K) for the triangle with the given vertices."""
    vertices = np.asarray(vertices, dtype=float)
    v0 = vertices[0]
    jac = np.column_stack([vertices[1] - v0, vertices[2] - v0])
    det = np.linalg.det(jac)
    if abs(det) / 2.0 < 1e-14:
        raise ValueError(f"degenerate element, area {abs(det) / 2.0:.3e}")
    rule = triangle_rule(2 * basis.degree)
    vals = basis.eval(rule.points)
    gram = abs(det) * vals.T @ (rule.weights[:, None] * vals)
    L = np.linalg.cholesky(gram)
    coeffs = np.linalg.inv(L).T
    return ElementBasis(basis, coeffs, v0, jac)
