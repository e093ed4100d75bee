import numpy as np
import pytest
import scipy.sparse as sp

from oldroyd_dg.forms import FormParams, assemble_pressure_poisson
from oldroyd_dg.linalg import (
    DirectSolver,
    SolverError,
    ZeroMeanSolver,
    relative_residual,
    solve_general,
    solve_zero_mean,
)
from oldroyd_dg.mesh import build_uniform_mesh
from oldroyd_dg.space import DgSpace


def test_identity():
    b = np.arange(5.0)
    x, rep = solve_general(sp.identity(5), b)
    np.testing.assert_array_equal(x, b)
    assert rep.residual == 0


def test_two_by_two():
    x, _ = solve_general(sp.csr_matrix([[2.0, 1.0], [1.0, 3.0]]), np.array([3.0, 5.0]))
    np.testing.assert_allclose(x, [0.8, 1.4], rtol=1e-14)


@pytest.mark.parametrize("method", ["direct", "gmres"])
def test_random_spd(method):
    rng = np.random.default_rng(0)
    M = rng.standard_normal((50, 50))
    A = sp.csr_matrix(M.T @ M + np.eye(50))
    b = rng.standard_normal(50)
    x, rep = solve_general(A, b, method=method)
    assert relative_residual(A, x, b) <= 1e-10
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), rtol=1e-7)


def test_nonsymmetric_against_dense():
    rng = np.random.default_rng(3)
    A = sp.random(80, 80, density=0.1, random_state=3) + 5 * sp.identity(80)
    b = rng.standard_normal(80)
    x, _ = solve_general(A, b)
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), rtol=1e-10)
    x2, _ = solve_general(A, b, method="gmres", x0=x)
    np.testing.assert_allclose(x2, x, rtol=1e-8)


def test_multiple_right_hand_sides():
    A = sp.csr_matrix([[4.0, 1.0], [2.0, 3.0]])
    B = np.array([[1.0, 0.0], [0.0, 1.0]])
    X, _ = DirectSolver(A).solve(B)
    np.testing.assert_allclose(X, np.linalg.inv(A.toarray()), rtol=1e-14)


def test_singular_and_bad_input():
    with pytest.raises(SolverError):
        DirectSolver(sp.csr_matrix([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SolverError):
        solve_general(sp.identity(3), np.ones(4))
    with pytest.raises(ValueError):
        solve_general(sp.identity(3), np.ones(3), method="cg")


@pytest.fixture(scope="module")
def poisson():
    P = DgSpace(build_uniform_mesh(4), 1)
    return assemble_pressure_poisson(P, FormParams()).matrix, P.mean_functional


def test_zero_mean_zero_rhs(poisson):
    A, m = poisson
    x, _ = solve_zero_mean(A, np.zeros(A.shape[0]), m)
    np.testing.assert_array_equal(x, 0.0)


def test_zero_mean_manufactured(poisson):
    A, m = poisson
    rng = np.random.default_rng(7)
    y = rng.standard_normal(A.shape[0])
    y -= (m @ y) / (m @ m) * m
    solver = ZeroMeanSolver(A, m)
    x, _ = solver.solve(A @ y)
    np.testing.assert_allclose(x, y, atol=1e-8)
    assert abs(m @ x) <= 1e-10
    x2, _ = solver.solve(A @ y)
    np.testing.assert_array_equal(x, x2)


def test_zero_mean_rejects_incompatible_rhs(poisson):
    A, m = poisson
    with pytest.raises(SolverError):
        solve_zero_mean(A, m.copy(), m)
