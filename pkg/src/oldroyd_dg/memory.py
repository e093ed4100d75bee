"""Exponential memory kernel and its right-rectangle history sum.

With ``beta(t) = gamma * exp(-eta * t)`` the history sum

    q^n = tau * sum_{j=1..n} beta(t_n - t_j) * u^j

obeys ``q^n = exp(-eta * tau) * q^{n-1} + tau * gamma * u^n``, so only the
current accumulator has to be stored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .space import DgSpace, FieldVec


@dataclass(frozen=True)
class KernelParams:
    gamma: float = 0.1
    eta: float = 0.1

    def __post_init__(self):
        if self.gamma < 0 or self.eta <= 0:
            raise ValueError(f"need gamma >= 0 and eta > 0, got gamma={self.gamma}, eta={self.eta}")

    def decay(self, tau: float) -> float:
        return math.exp(-self.eta * tau)


def beta(params: KernelParams, t):
    """Kernel value ``gamma * exp(-eta * t)`` for ``t >= 0``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("kernel is only defined for t >= 0")
    out = params.gamma * np.exp(-params.eta * t_arr)
    return float(out) if out.ndim == 0 else out


def kernel_integral_linear(params: KernelParams, t: float) -> float:
    """Closed form of ``int_0^t beta(t - s) (s + 1) ds``."""
    g, e = params.gamma, params.eta
    decay = math.exp(-e * t)
    return g * ((t + 1.0) / e - decay / e - (1.0 - decay) / e**2)


def rectangle_sum(params: KernelParams, tau: float, values) -> np.ndarray:
    """Direct right-rectangle sum ``tau * sum_j beta(t_n - t_j) * values[j-1]``.

    ``values`` is a sequence of arrays for steps 1..n. This is the O(n) form
    of the history term and serves as a reference for :class:`MemoryAccumulator`.
    """
    values = [np.asarray(v, dtype=float) for v in values]
    n = len(values)
    out = np.zeros_like(values[0]) if values else 0.0
    for j in range(1, n + 1):
        out = out + tau * beta(params, (n - j) * tau) * values[j - 1]
    return out


@dataclass(frozen=True)
class MemoryAccumulator:
    """History sum q^n of the intermediate velocities, updated recursively."""

    q: FieldVec
    n: int
    tau: float
    kernel: KernelParams

    @classmethod
    def empty(cls, space: DgSpace, tau: float, kernel: KernelParams) -> "MemoryAccumulator":
        return cls(space.zeros(), 0, tau, kernel)

    def decayed(self) -> FieldVec:
        """History carried to the next step, without its newest term."""
        return self.kernel.decay(self.tau) * self.q

    def push(self, u_new: FieldVec) -> "MemoryAccumulator":
        if u_new.space is not self.q.space:
            raise ValueError("pushed field lives on a different space")
        q = FieldVec(
            self.q.space,
            self.kernel.decay(self.tau) * self.q.coeffs + self.tau * self.kernel.gamma * u_new.coeffs,
        )
        return MemoryAccumulator(q, self.n + 1, self.tau, self.kernel)


def push(acc: MemoryAccumulator, u_new: FieldVec) -> MemoryAccumulator:
    return acc.push(u_new)


def history_rhs_and_matrix_shift(acc: MemoryAccumulator, tau: float, diffusion) -> tuple[np.ndarray, float]:
    """Split ``tau * A(q^n, w)`` into a known vector and an implicit coefficient.

    ``acc`` holds the history through step n-1; ``diffusion`` is the assembled
    velocity diffusion matrix. Returns ``(rhs, c)`` such that

        tau * A(q^n, w) = c * A(u^n, w) + rhs . w

    where the right-hand side term must be moved to the other side of the
    momentum equation by the caller.
    """
    rhs = tau * (diffusion @ acc.decayed().coeffs)
    return rhs, tau * tau * acc.kernel.gamma
