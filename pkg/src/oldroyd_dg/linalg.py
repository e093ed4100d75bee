"""Sparse solves for the momentum and pressure-Poisson systems.

Matrices are ``scipy.sparse`` CSR with sorted column indices. Factorizations
use SuperLU with a COLAMD ordering, which is deterministic for identical
inputs.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveReport:
    iterations: int | str
    residual: float
    wall_time: float


def relative_residual(A, x: np.ndarray, b: np.ndarray) -> float:
    r = A @ x - b
    return float(np.linalg.norm(r) / max(np.linalg.norm(b), 1.0))


def to_csr(A) -> sp.csr_matrix:
    m = sp.csr_matrix(A)
    m.sum_duplicates()
    m.sort_indices()
    return m


class DirectSolver:
    """Reusable sparse LU factorization of a square matrix."""

    def __init__(self, A):
        A = to_csr(A)
        if A.shape[0] != A.shape[1]:
            raise SolverError(f"matrix is not square: {A.shape}")
        self.A = A
        try:
            self.lu = spla.splu(A.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:  # SuperLU reports exact singularity this way
            raise SolverError(f"factorization failed: {exc}") from exc
        diag = np.abs(self.lu.U.diagonal())
        if diag.size and diag.min() <= 1e-14 * max(diag.max(), 1.0):
            raise SolverError(
                f"matrix is numerically singular (pivot ratio {diag.min() / diag.max():.2e})"
            )

    def solve(self, b: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, SolveReport]:
        t0 = time.perf_counter()
        x = self.lu.solve(np.asarray(b, dtype=float))
        cols = x.reshape(len(x), -1)
        bs = np.asarray(b, dtype=float).reshape(len(x), -1)
        res = max(relative_residual(self.A, cols[:, k], bs[:, k]) for k in range(cols.shape[1]))
        if res > tol:
            # one step of iterative refinement before giving up
            x = x + self.lu.solve(b - self.A @ x)
            cols = x.reshape(len(x), -1)
            res = max(relative_residual(self.A, cols[:, k], bs[:, k]) for k in range(cols.shape[1]))
            if res > tol:
                raise SolverError(f"direct solve residual {res:.3e} exceeds tolerance {tol:.1e}")
        return x, SolveReport("direct", res, time.perf_counter() - t0)


def solve_general(A, b, tol: float = 1e-10, method: str = "direct",
                  x0: np.ndarray | None = None, maxiter: int = 2000) -> tuple[np.ndarray, SolveReport]:
    """Solve a square (possibly nonsymmetric) sparse system.

    ``method="direct"`` uses sparse LU; ``method="gmres"`` runs restarted
    GMRES preconditioned with an incomplete LU factorization, starting from
    ``x0``.
    """
    A = to_csr(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise SolverError(f"incompatible shapes {A.shape} and {b.shape}")
    if method == "direct":
        return DirectSolver(A).solve(b, tol)
    if method != "gmres":
        raise ValueError(f"unknown method {method!r}")
    t0 = time.perf_counter()
    ilu = spla.spilu(A.tocsc(), drop_tol=1e-6, fill_factor=20)
    M = spla.LinearOperator(A.shape, ilu.solve)
    count = [0]

    def cb(_):
        count[0] += 1

    bnorm = max(np.linalg.norm(b), 1.0)
    x, info = spla.gmres(A, b, x0=x0, M=M, rtol=tol * bnorm / max(np.linalg.norm(b), 1e-300),
                         atol=0.0, restart=100, maxiter=maxiter, callback=cb,
                         callback_type="pr_norm")
    res = relative_residual(A, x, b)
    if info != 0 or res > tol:
        raise SolverError(f"GMRES did not converge (info={info}, residual {res:.3e})")
    return x, SolveReport(count[0], res, time.perf_counter() - t0)


class ZeroMeanSolver:
    """Solver for a singular symmetric system restricted to zero-mean vectors.

    Factorizes the bordered matrix ``[[A, m], [m^T, 0]]`` once; the
    multiplier vanishes when the right-hand side is orthogonal to constants.
    """

    def __init__(self, A, mean_functional: np.ndarray):
        A = to_csr(A)
        m = np.asarray(mean_functional, dtype=float)
        self.A = A
        self.m = m
        # the projection of the constant 1 has coefficients m (orthonormal basis)
        self.const = m / np.linalg.norm(m)
        col = sp.csr_matrix(m[:, None])
        K = sp.bmat([[A, col], [col.T, None]], format="csr")
        self.solver = DirectSolver(K)

    def solve(self, rhs: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, SolveReport]:
        rhs = np.asarray(rhs, dtype=float)
        leak = abs(self.const @ rhs)
        if leak > 1e-6 * max(np.linalg.norm(rhs), 1e-300) and leak > 1e-14:
            raise SolverError(
                f"incompatible right-hand side: component along constants {leak:.3e}"
            )
        t0 = time.perf_counter()
        y, _ = self.solver.solve(np.append(rhs, 0.0), tol)
        x = y[:-1]
        res = relative_residual(self.A, x, rhs)
        if res > tol:
            raise SolverError(f"zero-mean solve residual {res:.3e} exceeds tolerance {tol:.1e}")
        return x, SolveReport("direct", res, time.perf_counter() - t0)


def solve_zero_mean(A, rhs, mean_functional, tol: float = 1e-10) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A x = rhs`` subject to ``mean_functional @ x = 0``."""
    return ZeroMeanSolver(A, mean_functional).solve(rhs, tol)
