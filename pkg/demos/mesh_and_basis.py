"""Mesh, modal basis and quadrature on the unit square.

Builds the criss-cross triangulation, counts faces, and checks that the
element mass matrices of the modal basis are the identity.
"""
import numpy as np

from oldroyd_dg import DgSpace, build_uniform_mesh, l2_project

for n in (1, 2, 4):
    mesh = build_uniform_mesh(n)
    print(f"n={n}: {mesh.n_elements} triangles, {mesh.n_faces} faces "
          f"({mesh.interior.sum()} interior), h_max={mesh.h_max:.3f}")

mesh = build_uniform_mesh(4)
for r in (1, 2, 3):
    V = DgSpace(mesh, r, 1)
    # the L2 norm of a projected polynomial equals the Euclidean norm of its coefficients
    f = l2_project(V, lambda x, y: x**r + x * y)
    print(f"degree {r}: {V.n_dofs} dofs, ||f||_L2={f.l2_norm():.12f} |c|={np.linalg.norm(f.coeffs):.12f}")
