"""Pressure-correction time stepping for the Oldroyd model of order one.

One step n = 1..N:

1. momentum: implicit intermediate velocity with lagged transport field and
   the newest history term treated implicitly,
2. push the intermediate velocity into the memory accumulator,
3. potential: zero-mean interior-penalty Poisson solve,
4. pressure update with the delta-weighted divergence corrections,
5. velocity correction by the discrete gradient of the potential.

All mass matrices are the identity (orthonormal bases), so the updates in
steps 4 and 5 are plain vector operations.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import forms
from .linalg import DirectSolver, SolveReport, SolverError, ZeroMeanSolver
from .memory import KernelParams, MemoryAccumulator, history_rhs_and_matrix_shift
from .space import DgSpace, FieldVec, l2_project, mean_value

log = logging.getLogger(__name__)

DIM = 2


class ParameterError(ValueError):
    pass


class StepError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


def delta_bound(omega: float, mu: float, gamma: float, d: int = DIM) -> float:
    """Largest delta allowed by the stability assumption."""
    b1 = omega / (8 * d)
    if gamma == 0:
        return b1
    return min(b1, omega * mu**2 / (16 * gamma**2 * d))


@dataclass(frozen=True)
class SchemeParams:
    mu: float = 1.0
    kernel: KernelParams = field(default_factory=KernelParams)
    tau: float = 1.0 / 32
    T: float = 1.0
    forms: forms.FormParams = field(default_factory=forms.FormParams)
    delta: float | None = None
    tol: float = 1e-10
    allow_unstable_delta: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ParameterError(f"mu must be > 0, got {self.mu}")
        if not self.tau > 0:
            raise ParameterError(f"tau must be > 0, got {self.tau}")
        if self.T < 0:
            raise ParameterError(f"T must be >= 0, got {self.T}")
        n = self.T / self.tau
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ParameterError(f"T/tau = {n} is not an integer")
        if self.delta is None:
            object.__setattr__(self, "delta", self.delta_max)
        if self.delta < 0:
            raise ParameterError(f"delta must be >= 0, got {self.delta}")
        if self.delta > self.delta_max * (1 + 1e-12) and not self.allow_unstable_delta:
            raise ParameterError(
                f"delta = {self.delta} violates delta <= min(omega/(8d), omega mu^2/(16 gamma^2 d)) "
                f"= {self.delta_max} (omega={self.omega}, d={DIM})"
            )

    @property
    def omega(self) -> float:
        return self.forms.omega

    @property
    def delta_max(self) -> float:
        return delta_bound(self.omega, self.mu, self.kernel.gamma)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))


@dataclass(frozen=True)
class SchemeState:
    n: int
    u: FieldVec
    p: FieldVec
    acc: MemoryAccumulator
    v: FieldVec
    u_tilde: FieldVec | None = None

    @property
    def t(self) -> float:
        return self.n * self.acc.tau


@dataclass(frozen=True)
class StepDiagnostics:
    step: int
    time: float
    u_l2: float
    u_tilde_dg: float
    p_mean: float
    momentum_residual: float
    momentum_iterations: int | str


class PressureCorrection:
    """Operators and solvers for the scheme on a fixed pair of spaces."""

    def __init__(self, vel: DgSpace, pres: DgSpace, params: SchemeParams):
        if not vel.is_vector or pres.is_vector or not vel.same_mesh(pres):
            raise ParameterError("need a vector velocity space and a scalar pressure space on one mesh")
        if pres.degree != vel.degree - 1:
            raise ParameterError(
                f"pressure degree must be velocity degree - 1, got {vel.degree} and {pres.degree}"
            )
        self.vel = vel
        self.pres = pres
        self.params = params
        fp = params.forms
        self.diff_scalar = forms.diffusion_scalar(vel, fp)
        self.diffusion = forms.scalar_to_vector(self.diff_scalar, vel)
        self.B = forms.assemble_pressure_coupling(vel, pres).matrix
        self.BT = self.B.T.tocsr()
        self.sip = forms.assemble_pressure_poisson(pres, fp).matrix
        self.sip_solver = ZeroMeanSolver(self.sip, pres.mean_functional)
        self.dg_norm_matrix = forms.dg_norm_matrix(vel, fp)
        k = params.kernel
        tau = params.tau
        n_scalar = self.diff_scalar.shape[0]
        # time independent part of the momentum matrix, per component
        self.base_scalar = (
            sp.identity(n_scalar, format="csr")
            + (tau * params.mu + tau * tau * k.gamma) * self.diff_scalar
        ).tocsr()
        self._comp_dofs = [vel.scalar_dofs(c).ravel() for c in range(vel.n_components)]

    # -- helpers ---------------------------------------------------------
    def _split(self, x: np.ndarray) -> np.ndarray:
        return np.column_stack([x[d] for d in self._comp_dofs])

    def _merge(self, cols: np.ndarray) -> np.ndarray:
        out = np.empty(self.vel.n_dofs)
        for c, d in enumerate(self._comp_dofs):
            out[d] = cols[:, c]
        return out

    def load_vector(self, f: Callable, t: float) -> np.ndarray:
        """Moments (f(t), phi_i) of the body force."""
        return l2_project(self.vel, lambda x, y: f(x, y, t), 2 * self.vel.degree + 2).coeffs

    def momentum_matrix_scalar(self, u_prev: FieldVec) -> sp.csr_matrix:
        tau = self.params.tau
        conv = forms.convection_scalar(u_prev, u_prev)
        return (self.base_scalar + tau * conv).tocsr()

    def momentum_matrix(self, u_prev: FieldVec) -> sp.csr_matrix:
        return forms.scalar_to_vector(self.momentum_matrix_scalar(u_prev), self.vel)

    # -- stages ----------------------------------------------------------
    def momentum_rhs(self, state: SchemeState, load: np.ndarray | None) -> np.ndarray:
        tau = self.params.tau
        hist, _ = history_rhs_and_matrix_shift(state.acc, tau, self.diffusion)
        rhs = state.u.coeffs + tau * (self.BT @ state.p.coeffs) - hist
        if load is not None:
            rhs = rhs + tau * load
        return rhs

    def momentum_solve(self, state: SchemeState, load: np.ndarray | None) -> tuple[FieldVec, SolveReport]:
        A = self.momentum_matrix_scalar(state.u)
        rhs = self.momentum_rhs(state, load)
        x, rep = DirectSolver(A).solve(self._split(rhs), self.params.tol)
        return FieldVec(self.vel, self._merge(x)), rep

    def projection_solve(self, u_tilde: FieldVec) -> tuple[FieldVec, SolveReport]:
        rhs = -(self.B @ u_tilde.coeffs) / self.params.tau
        x, rep = self.sip_solver.solve(rhs, self.params.tol)
        return FieldVec(self.pres, x), rep

    def pressure_update(self, p_prev: FieldVec, v: FieldVec, u_tilde: FieldVec,
                        acc: MemoryAccumulator) -> FieldVec:
        """p^n from p^{n-1}, v^n, and b-terms of u~^n and the completed history q^n."""
        d = self.params.delta
        corr = self.B @ (self.params.mu * u_tilde.coeffs + acc.q.coeffs)
        return FieldVec(self.pres, p_prev.coeffs + v.coeffs - d * corr)

    def velocity_correct(self, u_tilde: FieldVec, v: FieldVec) -> FieldVec:
        return FieldVec(self.vel, u_tilde.coeffs + self.params.tau * (self.BT @ v.coeffs))

    # -- driver ----------------------------------------------------------
    def initialize(self, u0: Callable | None = None) -> SchemeState:
        u = self.vel.zeros() if u0 is None else l2_project(self.vel, u0)
        acc = MemoryAccumulator.empty(self.vel, self.params.tau, self.params.kernel)
        return SchemeState(0, u, self.pres.zeros(), acc, self.pres.zeros())

    def step(self, state: SchemeState, f: Callable | None = None) -> tuple[SchemeState, StepDiagnostics]:
        n = state.n + 1
        t = n * self.params.tau
        try:
            load = None if f is None else self.load_vector(f, t)
            u_tilde, rep = self.momentum_solve(state, load)
            acc = state.acc.push(u_tilde)
            v, _ = self.projection_solve(u_tilde)
            p = self.pressure_update(state.p, v, u_tilde, acc)
            u = self.velocity_correct(u_tilde, v)
        except (SolverError, ValueError, FloatingPointError) as exc:
            raise StepError(n, exc) from exc
        new = SchemeState(n, u, p, acc, v, u_tilde)
        ut = u_tilde.coeffs
        diag = StepDiagnostics(
            step=n,
            time=t,
            u_l2=u.l2_norm(),
            u_tilde_dg=float(np.sqrt(max(ut @ (self.dg_norm_matrix @ ut), 0.0))),
            p_mean=mean_value(p),
            momentum_residual=rep.residual,
            momentum_iterations=rep.iterations,
        )
        return new, diag

    def run(self, state: SchemeState, f: Callable | None = None, until: float | None = None,
            callback: Callable[[SchemeState, StepDiagnostics], None] | None = None
            ) -> tuple[SchemeState, list[StepDiagnostics]]:
        T = self.params.T if until is None else until
        n_final = int(round(T / self.params.tau))
        diags = []
        while state.n < n_final:
            state, d = self.step(state, f)
            diags.append(d)
            if callback is not None:
                callback(state, d)
            log.debug("step %d t=%.4g |u|=%.3e mean p=%.1e", d.step, d.time, d.u_l2, d.p_mean)
        return state, diags

    # -- checks ----------------------------------------------------------
    def unsplit_momentum_residual(self, prev: SchemeState, new: SchemeState,
                                  load: np.ndarray | None) -> float:
        """Residual of the momentum equation written with the full history sum.

        Uses ``new.acc.q`` (which contains the newest intermediate velocity)
        instead of the implicit/explicit split used by the solver.
        """
        tau = self.params.tau
        ut = new.u_tilde.coeffs
        conv = forms.scalar_to_vector(forms.convection_scalar(prev.u, prev.u), self.vel)
        lhs = ut + tau * (conv @ ut) + tau * self.params.mu * (self.diffusion @ ut) \
            + tau * (self.diffusion @ new.acc.q.coeffs)
        rhs = prev.u.coeffs + tau * (self.BT @ prev.p.coeffs)
        if load is not None:
            rhs = rhs + tau * load
        return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1.0))


def discrete_energy(u_l2: list[float], u_tilde_dg: list[float], omega: float, mu: float, tau: float,
                    u0_l2: float) -> np.ndarray:
    """||u^m||^2 + (omega mu / 2) tau sum_{n<=m} ||u~^n||_dG^2 for m = 0..N."""
    e = [u0_l2**2]
    acc = 0.0
    for ul, ud in zip(u_l2, u_tilde_dg):
        acc += ud**2
        e.append(ul**2 + 0.5 * omega * mu * tau * acc)
    return np.array(e)


def with_delta(params: SchemeParams, delta: float) -> SchemeParams:
    return replace(params, delta=delta)

