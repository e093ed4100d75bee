"""Uniform triangulations of the unit square with face connectivity."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INTERIOR = "interior"
BOUNDARY = "boundary"


@dataclass(frozen=True)
class Face:
    vertex_ids: tuple[int, int]
    kind: str
    k1: int
    k2: int | None
    normal: np.ndarray
    measure: float

    @property
    def h(self) -> float:
        # h_F = |F|^(1/(d-1)) with d = 2
        return self.measure


@dataclass(frozen=True)
class TriMesh:
    """Conforming triangle mesh stored as flat arrays.

    Attributes
    ----------
    vertices : (nv, 2) float array
    elements : (ne, 3) int array, counter-clockwise
    face_vertices : (nf, 2) int array
    face_k1, face_k2 : (nf,) int arrays; ``face_k2 == -1`` on the boundary
    face_normals : (nf, 2) unit normals pointing from k1 to k2 (outward on
        the boundary)
    face_measures : (nf,) edge lengths
    element_faces : (ne, 3) face ids, local edge j is opposite vertex j
    """

    vertices: np.ndarray
    elements: np.ndarray
    face_vertices: np.ndarray
    face_k1: np.ndarray
    face_k2: np.ndarray
    face_normals: np.ndarray
    face_measures: np.ndarray
    element_faces: np.ndarray
    n_cells_per_side: int = 0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_faces(self) -> int:
        return len(self.face_vertices)

    @property
    def interior(self) -> np.ndarray:
        return self.face_k2 >= 0

    @property
    def boundary(self) -> np.ndarray:
        return self.face_k2 < 0

    @property
    def face_h(self) -> np.ndarray:
        return self.face_measures

    @property
    def jacobians(self) -> np.ndarray:
        v = self.vertices[self.elements]
        return np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)

    @property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.det(self.jacobians)

    @property
    def diameters(self) -> np.ndarray:
        v = self.vertices[self.elements]
        edges = v[:, [1, 2, 0]] - v
        return np.linalg.norm(edges, axis=-1).max(axis=1)

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    def face(self, face_id: int) -> Face:
        if not 0 <= face_id < self.n_faces:
            raise IndexError(f"face id {face_id} out of range [0, {self.n_faces})")
        k2 = int(self.face_k2[face_id])
        return Face(
            vertex_ids=tuple(int(i) for i in self.face_vertices[face_id]),
            kind=INTERIOR if k2 >= 0 else BOUNDARY,
            k1=int(self.face_k1[face_id]),
            k2=k2 if k2 >= 0 else None,
            normal=self.face_normals[face_id].copy(),
            measure=float(self.face_measures[face_id]),
        )

    def faces(self) -> list[Face]:
        return [self.face(i) for i in range(self.n_faces)]

    def dump(self, path: str | Path) -> None:
        """Write a plain-text listing of nodes, elements and faces."""
        lines = [f"# nodes {len(self.vertices)}"]
        lines += [f"N {i} {x:.17g} {y:.17g}" for i, (x, y) in enumerate(self.vertices)]
        lines.append(f"# elements {self.n_elements}")
        lines += [f"E {i} {a} {b} {c}" for i, (a, b, c) in enumerate(self.elements)]
        lines.append(f"# faces {self.n_faces}")
        for i in range(self.n_faces):
            a, b = self.face_vertices[i]
            nx, ny = self.face_normals[i]
            lines.append(
                f"F {i} {a} {b} {self.face_k1[i]} {self.face_k2[i]} "
                f"{nx:.17g} {ny:.17g} {self.face_measures[i]:.17g}"
            )
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class TracePair:
    """Elements on either side of a face, for interior/exterior traces.

    ``k2`` is None on the boundary, where the exterior trace is zero.
    """

    face_id: int
    k1: int
    k2: int | None
    normal: np.ndarray
    local_edge1: int
    local_edge2: int | None


def face_trace_pair(mesh: TriMesh, face_id: int) -> TracePair:
    f = mesh.face(face_id)
    le1 = int(np.flatnonzero(mesh.element_faces[f.k1] == face_id)[0])
    le2 = None
    if f.k2 is not None:
        le2 = int(np.flatnonzero(mesh.element_faces[f.k2] == face_id)[0])
    return TracePair(face_id, f.k1, f.k2, f.normal, le1, le2)


def mesh_from_arrays(vertices: np.ndarray, elements: np.ndarray, n_cells_per_side: int = 0) -> TriMesh:
    """Build connectivity for a triangle soup with counter-clockwise elements.

    Interior face normals point from the lower element id to the higher one.
    """
    vertices = np.asarray(vertices, dtype=float)
    elements = np.asarray(elements, dtype=np.int64)
    ne = len(elements)
    # local edge j is opposite local vertex j
    local = np.array([[1, 2], [2, 0], [0, 1]])
    edges = elements[:, local]  # (ne, 3, 2)
    key = np.sort(edges, axis=-1).reshape(-1, 2)
    uniq, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if counts.max() > 2:
        raise ValueError("non-manifold mesh: an edge is shared by more than two elements")
    nf = len(uniq)
    owner = np.repeat(np.arange(ne), 3)
    k1 = np.full(nf, -1, dtype=np.int64)
    k2 = np.full(nf, -1, dtype=np.int64)
    # owners in increasing element id, so the first seen is the lower id
    for idx in np.argsort(owner, kind="stable"):
        f = inverse[idx]
        if k1[f] < 0:
            k1[f] = owner[idx]
        else:
            k2[f] = owner[idx]
    element_faces = inverse.reshape(ne, 3)

    a = vertices[uniq[:, 0]]
    b = vertices[uniq[:, 1]]
    t = b - a
    measures = np.linalg.norm(t, axis=1)
    normals = np.column_stack([t[:, 1], -t[:, 0]]) / measures[:, None]
    # orient outward from k1
    centroid1 = vertices[elements[k1]].mean(axis=1)
    mid = 0.5 * (a + b)
    flip = np.einsum("ij,ij->i", normals, mid - centroid1) < 0
    normals[flip] *= -1.0

    for arr in (vertices, elements, uniq, k1, k2, normals, measures, element_faces):
        arr.setflags(write=False)
    return TriMesh(vertices, elements, uniq, k1, k2, normals, measures, element_faces, n_cells_per_side)


def build_uniform_mesh(n_cells_per_side: int) -> TriMesh:
    """Split the unit square into n x n squares, each cut along the (0,0)-(1,1) diagonal."""
    n = int(n_cells_per_side)
    if n < 1:
        raise ValueError("n_cells_per_side must be >= 1")
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    elements = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10 = v00 + 1
            v01 = v00 + n + 1
            v11 = v01 + 1
            elements.append((v00, v10, v11))
            elements.append((v00, v11, v01))
    return mesh_from_arrays(vertices, np.array(elements), n)
