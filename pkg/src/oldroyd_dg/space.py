"""Broken polynomial spaces on a triangle mesh.

Every element carries its own L2-orthonormal modal basis, so the global
mass matrix of any space is the identity. Dofs are ordered element-major,
then component, then basis index::

    dof(e, c, i) = e * n_components * n_basis + c * n_basis + i
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .mesh import TriMesh
from .quadrature import (
    ElementBasis,
    edge_rule,
    n_basis,
    orthonormalize_on_element,
    reference_basis,
    triangle_rule,
)


@dataclass(frozen=True)
class VolumeQuad:
    """Volume quadrature data for all elements at once.

    ``weights`` already include the Jacobian; ``phi`` and ``grad`` are the
    physical orthonormal basis values and gradients.
    """

    points: np.ndarray  # (E, Q, 2)
    weights: np.ndarray  # (E, Q)
    phi: np.ndarray  # (E, Q, nb)
    grad: np.ndarray  # (E, Q, nb, 2)


@dataclass(frozen=True)
class FaceQuad:
    """Face quadrature data with traces from both adjacent elements.

    On boundary faces the ``phi2``/``grad2`` entries are zero and ``k2`` is -1.
    """

    points: np.ndarray  # (F, Qf, 2)
    weights: np.ndarray  # (F, Qf)
    normals: np.ndarray  # (F, 2)
    h: np.ndarray  # (F,)
    k1: np.ndarray
    k2: np.ndarray
    interior: np.ndarray  # (F,) bool
    phi1: np.ndarray  # (F, Qf, nb)
    grad1: np.ndarray  # (F, Qf, nb, 2)
    phi2: np.ndarray
    grad2: np.ndarray


class DgSpace:
    """Fully discontinuous space of (vector-valued) degree-``degree`` polynomials."""

    def __init__(self, mesh: TriMesh, degree: int, n_components: int = 1):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        if n_components not in (1, 2):
            raise ValueError("n_components must be 1 or 2")
        self.mesh = mesh
        self.degree = int(degree)
        self.n_components = int(n_components)
        self.basis = reference_basis(self.degree)
        self._quad_cache: dict = {}

    def __repr__(self) -> str:
        return (
            f"DgSpace(degree={self.degree}, n_components={self.n_components}, "
            f"n_elements={self.mesh.n_elements})"
        )

    @property
    def n_basis(self) -> int:
        return n_basis(self.degree)

    @property
    def dofs_per_element(self) -> int:
        return self.n_components * self.n_basis

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_elements * self.dofs_per_element

    @property
    def is_vector(self) -> bool:
        return self.n_components > 1

    def same_mesh(self, other: "DgSpace") -> bool:
        return self.mesh is other.mesh

    def dof_index(self, element, component, basis_index):
        return (
            np.asarray(element) * self.dofs_per_element
            + np.asarray(component) * self.n_basis
            + np.asarray(basis_index)
        )

    def scalar_dofs(self, component: int = 0) -> np.ndarray:
        """Global dof ids of one component, shape (E, nb)."""
        e = np.arange(self.mesh.n_elements)[:, None]
        i = np.arange(self.n_basis)[None, :]
        return self.dof_index(e, component, i)

    @cached_property
    def _inv_sqrt_det(self) -> np.ndarray:
        return 1.0 / np.sqrt(2.0 * self.mesh.areas)

    @cached_property
    def _inv_jac(self) -> np.ndarray:
        return np.linalg.inv(self.mesh.jacobians)

    def element_basis(self, element: int) -> ElementBasis:
        verts = self.mesh.vertices[self.mesh.elements[element]]
        return orthonormalize_on_element(self.basis, verts)

    @property
    def element_bases(self) -> list[ElementBasis]:
        return [self.element_basis(e) for e in range(self.mesh.n_elements)]

    def to_reference(self, elements: np.ndarray, x: np.ndarray) -> np.ndarray:
        v0 = self.mesh.vertices[self.mesh.elements[elements, 0]]
        return np.einsum("...ij,...j->...i", self._inv_jac[elements], x - v0)

    def to_physical(self, elements: np.ndarray, xi: np.ndarray) -> np.ndarray:
        v0 = self.mesh.vertices[self.mesh.elements[elements, 0]]
        return v0 + np.einsum("...ij,...j->...i", self.mesh.jacobians[elements], xi)

    def basis_at(self, elements: np.ndarray, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Physical basis values (..., nb) and gradients (..., nb, 2).

        ``elements`` and ``xi[..., :]`` broadcast against each other.
        """
        elements = np.asarray(elements)
        phi = self.basis.eval(xi) * self._inv_sqrt_det[elements][..., None]
        gref = self.basis.eval_grad(xi)
        # physical grad = J^{-T} grad_ref
        grad = np.einsum("...id,...dk->...ik", gref, self._inv_jac[elements]) * (
            self._inv_sqrt_det[elements][..., None, None]
        )
        return phi, grad

    def volume_quad(self, exactness: int | None = None) -> VolumeQuad:
        if exactness is None:
            exactness = 2 * self.degree + 2
        key = ("vol", exactness)
        if key not in self._quad_cache:
            rule = triangle_rule(exactness)
            E = self.mesh.n_elements
            elems = np.arange(E)[:, None]
            xi = np.broadcast_to(rule.points, (E, rule.n_points, 2))
            phi, grad = self.basis_at(elems, xi)
            pts = self.to_physical(elems, xi)
            wts = rule.weights[None, :] * (2.0 * self.mesh.areas)[:, None]
            self._quad_cache[key] = VolumeQuad(pts, wts, phi, grad)
        return self._quad_cache[key]

    def face_quad(self, exactness: int | None = None) -> FaceQuad:
        if exactness is None:
            exactness = 2 * self.degree + 2
        key = ("face", exactness)
        if key not in self._quad_cache:
            m = self.mesh
            rule = edge_rule(exactness)
            a = m.vertices[m.face_vertices[:, 0]]
            b = m.vertices[m.face_vertices[:, 1]]
            s = rule.points
            pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
            wts = rule.weights[None, :] * m.face_measures[:, None]
            k1 = np.asarray(m.face_k1)
            k2 = np.asarray(m.face_k2)
            interior = k2 >= 0
            k1b = k1[:, None]
            phi1, grad1 = self.basis_at(k1b, self.to_reference(k1b, pts))
            k2s = np.where(interior, k2, k1)[:, None]
            phi2, grad2 = self.basis_at(k2s, self.to_reference(k2s, pts))
            phi2 = np.where(interior[:, None, None], phi2, 0.0)
            grad2 = np.where(interior[:, None, None, None], grad2, 0.0)
            self._quad_cache[key] = FaceQuad(
                pts, wts, np.asarray(m.face_normals), np.asarray(m.face_measures),
                k1, k2, interior, phi1, grad1, phi2, grad2,
            )
        return self._quad_cache[key]

    @cached_property
    def mean_functional(self) -> np.ndarray:
        """Vector m with m @ coeffs = integral of a scalar field."""
        if self.is_vector:
            raise ValueError("mean functional is defined on scalar spaces only")
        vq = self.volume_quad(2 * self.degree)
        return np.einsum("eq,eqi->ei", vq.weights, vq.phi).ravel()

    def zeros(self) -> "FieldVec":
        return FieldVec(self, np.zeros(self.n_dofs))


@dataclass(frozen=True)
class FieldVec:
    """Coefficients of a discrete field in a :class:`DgSpace`."""

    space: DgSpace
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.space.n_dofs,):
            raise ValueError(
                f"coefficient vector has shape {c.shape}, space expects ({self.space.n_dofs},)"
            )
        object.__setattr__(self, "coeffs", c)

    @property
    def blocks(self) -> np.ndarray:
        """Coefficients reshaped to (E, n_components, nb)."""
        s = self.space
        return self.coeffs.reshape(s.mesh.n_elements, s.n_components, s.n_basis)

    def _check(self, other: "FieldVec") -> None:
        if other.space is not self.space:
            raise ValueError("fields live on different spaces")

    def __add__(self, other: "FieldVec") -> "FieldVec":
        self._check(other)
        return FieldVec(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other: "FieldVec") -> "FieldVec":
        self._check(other)
        return FieldVec(self.space, self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "FieldVec":
        return FieldVec(self.space, a * self.coeffs)

    __rmul__ = __mul__

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def values_at_quad(self, vq: VolumeQuad) -> np.ndarray:
        """Values at volume quadrature points, shape (E, Q, n_components)."""
        return np.einsum("eqi,eci->eqc", vq.phi, self.blocks)

    def grads_at_quad(self, vq: VolumeQuad) -> np.ndarray:
        """Gradients, shape (E, Q, n_components, 2)."""
        return np.einsum("eqid,eci->eqcd", vq.grad, self.blocks)


def _call_field(f: Callable, x: np.ndarray, y: np.ndarray, n_components: int) -> np.ndarray:
    vals = np.asarray(f(x, y), dtype=float)
    if n_components == 1:
        vals = np.broadcast_to(vals, x.shape)[..., None]
    else:
        vals = np.moveaxis(np.broadcast_to(vals, (n_components,) + x.shape), 0, -1)
    return vals


def l2_project(space: DgSpace, f: Callable, exactness: int | None = None) -> FieldVec:
    """Local L2 projection of ``f(x, y)`` onto ``space``.

    For vector spaces ``f`` returns the components stacked along the first
    axis. With orthonormal bases the coefficients are plain moments.
    """
    if exactness is None:
        exactness = 2 * space.degree + 4
    vq = space.volume_quad(exactness)
    vals = _call_field(f, vq.points[..., 0], vq.points[..., 1], space.n_components)
    blocks = np.einsum("eq,eqc,eqi->eci", vq.weights, vals, vq.phi)
    return FieldVec(space, blocks.ravel())


def evaluate(field: FieldVec, element: int, ref_point) -> np.ndarray | float:
    """Value of ``field`` at a reference point of one element."""
    s = field.space
    if not 0 <= element < s.mesh.n_elements:
        raise IndexError(f"element {element} out of range")
    phi, _ = s.basis_at(np.asarray(element), np.asarray(ref_point, dtype=float))
    val = field.blocks[element] @ phi
    return float(val[0]) if s.n_components == 1 else val


def evaluate_at(field: FieldVec, element: int, x) -> np.ndarray | float:
    """Value at a physical point inside ``element``."""
    xi = field.space.to_reference(np.asarray(element), np.asarray(x, dtype=float))
    return evaluate(field, element, xi)


def mean_value(field: FieldVec) -> float:
    """Integral of a scalar field over the domain."""
    if field.space.is_vector:
        raise ValueError("mean_value needs a scalar field")
    return float(field.space.mean_functional @ field.coeffs)


def remove_mean(field: FieldVec) -> FieldVec:
    """Subtract the constant that makes the integral vanish."""
    m = field.space.mean_functional
    area = float(field.space.mesh.areas.sum())
    c = mean_value(field) / area
    # the projection of the constant 1 has coefficients m
    return FieldVec(field.space, field.coeffs - c * m)


def export_csv(field: FieldVec, path: str | Path, exactness: int | None = None) -> None:
    """Write ``element, x, y, value...`` rows at volume quadrature points."""
    s = field.space
    vq = s.volume_quad(exactness)
    vals = field.values_at_quad(vq)
    names = ["value"] if s.n_components == 1 else [f"value{c}" for c in range(s.n_components)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element", "x", "y", *names])
        for e in range(s.mesh.n_elements):
            for q in range(vq.weights.shape[1]):
                w.writerow([e, repr(vq.points[e, q, 0]), repr(vq.points[e, q, 1]),
                            *(repr(v) for v in vals[e, q])])
