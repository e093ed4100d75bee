import math

import numpy as np
import pytest

from oldroyd_dg.mesh import BOUNDARY, INTERIOR, build_uniform_mesh, face_trace_pair


def test_single_cell_counts():
    m = build_uniform_mesh(1)
    assert m.n_elements == 2
    assert m.n_faces == 5
    assert m.boundary.sum() == 4 and m.interior.sum() == 1
    assert m.areas.sum() == pytest.approx(1.0, abs=1e-15)


def test_two_by_two_counts():
    # 4 squares x 2 triangles; edges: 12 grid edges + 4 diagonals, 8 on the boundary
    m = build_uniform_mesh(2)
    assert m.n_elements == 8
    assert m.n_faces == 16
    assert m.boundary.sum() == 8 and m.interior.sum() == 8


@pytest.mark.parametrize("n", [1, 3, 5, 8])
def test_counts_general(n):
    m = build_uniform_mesh(n)
    assert m.n_elements == 2 * n * n
    assert m.n_faces == 3 * n * n + 2 * n
    assert m.boundary.sum() == 4 * n


def test_face_sizes_n4():
    m = build_uniform_mesh(4)
    t = m.vertices[m.face_vertices[:, 1]] - m.vertices[m.face_vertices[:, 0]]
    axis = (np.abs(t[:, 0]) < 1e-14) | (np.abs(t[:, 1]) < 1e-14)
    np.testing.assert_allclose(m.face_h[axis], 0.25, atol=1e-15)
    np.testing.assert_allclose(m.face_h[~axis], 0.25 * math.sqrt(2), atol=1e-15)
    assert (~axis).sum() == 16


def test_normals_unit_and_orthogonal():
    m = build_uniform_mesh(3)
    t = m.vertices[m.face_vertices[:, 1]] - m.vertices[m.face_vertices[:, 0]]
    np.testing.assert_allclose(np.linalg.norm(m.face_normals, axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(np.einsum("fd,fd->f", t, m.face_normals), 0.0, atol=1e-14)


def test_normals_point_from_k1_to_k2():
    m = build_uniform_mesh(4)
    cent = m.vertices[m.elements].mean(axis=1)
    mid = m.vertices[m.face_vertices].mean(axis=1)
    for f in range(m.n_faces):
        d = mid[f] - cent[m.face_k1[f]]
        assert d @ m.face_normals[f] > 0
        if m.face_k2[f] >= 0:
            assert m.face_k1[f] < m.face_k2[f]
            assert (cent[m.face_k2[f]] - mid[f]) @ m.face_normals[f] > 0


def test_boundary_normals_outward():
    m = build_uniform_mesh(4)
    mid = m.vertices[m.face_vertices].mean(axis=1)
    for f in np.flatnonzero(m.boundary):
        # the outward direction moves the midpoint off the square
        p = mid[f] + 1e-3 * m.face_normals[f]
        assert p.min() < 0 or p.max() > 1


def test_closed_element_boundaries():
    # sum over faces of n |F| per element vanishes (divergence theorem for constants)
    m = build_uniform_mesh(5)
    acc = np.zeros((m.n_elements, 2))
    w = m.face_normals * m.face_measures[:, None]
    np.add.at(acc, m.face_k1, w)
    inner = m.interior
    np.add.at(acc, m.face_k2[inner], -w[inner])
    np.testing.assert_allclose(acc, 0.0, atol=1e-14)
    assert m.face_measures[m.boundary].sum() == pytest.approx(4.0)


def test_element_faces_opposite_vertex():
    m = build_uniform_mesh(3)
    for e, tri in enumerate(m.elements):
        for j in range(3):
            f = m.element_faces[e, j]
            assert set(m.face_vertices[f]) == set(tri) - {tri[j]}


def test_elements_counter_clockwise_and_h():
    m = build_uniform_mesh(6)
    np.testing.assert_allclose(m.areas, 1 / 72, rtol=1e-13)
    assert m.h_max == pytest.approx(math.sqrt(2) / 6)


def test_face_records_and_trace_pairs():
    m = build_uniform_mesh(1)
    kinds = [f.kind for f in m.faces()]
    assert kinds.count(INTERIOR) == 1 and kinds.count(BOUNDARY) == 4
    fi = int(np.flatnonzero(m.interior)[0])
    pair = face_trace_pair(m, fi)
    assert {pair.k1, pair.k2} == {0, 1}
    fb = int(np.flatnonzero(m.boundary)[0])
    face = m.face(fb)
    assert face.k2 is None and face.h == pytest.approx(1.0)
    with pytest.raises(IndexError):
        m.face(m.n_faces)


def test_dump(tmp_path):
    m = build_uniform_mesh(2)
    p = tmp_path / "mesh.txt"
    m.dump(p)
    lines = p.read_text().splitlines()
    assert sum(line.startswith("N ") for line in lines) == 9
    assert sum(line.startswith("E ") for line in lines) == 8
    assert sum(line.startswith("F ") for line in lines) == 16
