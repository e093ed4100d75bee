import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from oldroyd_dg.forms import FormParams, assemble_diffusion
from oldroyd_dg.memory import (
    KernelParams,
    MemoryAccumulator,
    beta,
    history_rhs_and_matrix_shift,
    kernel_integral_linear,
    push,
    rectangle_sum,
)
from oldroyd_dg.mesh import build_uniform_mesh
from oldroyd_dg.space import DgSpace, FieldVec, l2_project

K = KernelParams(0.1, 0.1)


@pytest.fixture(scope="module")
def space():
    return DgSpace(build_uniform_mesh(2), 1, 2)


def test_kernel_values():
    assert beta(K, 0.0) == pytest.approx(0.1, rel=1e-15)
    assert beta(K, 1.0) == pytest.approx(0.1 * math.exp(-0.1), rel=1e-15)
    vals = beta(K, np.linspace(0, 5, 11))
    assert np.all(np.diff(vals) < 0)
    with pytest.raises(ValueError):
        beta(K, -1e-3)
    with pytest.raises(ValueError):
        KernelParams(0.1, 0.0)


def test_first_push(space):
    acc = MemoryAccumulator.empty(space, 0.25, K)
    u = FieldVec(space, np.random.default_rng(0).standard_normal(space.n_dofs))
    acc = push(acc, u)
    np.testing.assert_allclose(acc.q.coeffs, 0.25 * 0.1 * u.coeffs, rtol=1e-15)
    assert acc.n == 1


def test_two_pushes_of_one(space):
    one = l2_project(space, lambda x, y: np.stack([np.ones_like(x), np.ones_like(y)]))
    acc = MemoryAccumulator.empty(space, 0.5, K).push(one).push(one)
    factor = 0.5 * (0.1 * math.exp(-0.05) + 0.1)
    np.testing.assert_allclose(acc.q.coeffs, factor * one.coeffs, rtol=1e-14)


def test_recursion_matches_direct_sum(space):
    rng = np.random.default_rng(42)
    tau = 0.02
    acc = MemoryAccumulator.empty(space, tau, K)
    history = []
    for _ in range(50):
        u = FieldVec(space, rng.standard_normal(space.n_dofs))
        history.append(u.coeffs)
        acc = acc.push(u)
        direct = rectangle_sum(K, tau, history)
        np.testing.assert_allclose(acc.q.coeffs, direct, rtol=0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(gamma=st.floats(0, 2), eta=st.floats(0.01, 5), tau=st.floats(1e-3, 0.5),
       n=st.integers(1, 30))
def test_recursion_matches_direct_sum_scalar(gamma, eta, tau, n):
    k = KernelParams(gamma, eta)
    vals = np.sin(np.arange(1, n + 1))
    q = 0.0
    for v in vals:
        q = k.decay(tau) * q + tau * gamma * v
    assert q == pytest.approx(float(rectangle_sum(k, tau, list(vals))), abs=1e-12)


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_closed_form_against_adaptive_quadrature(t):
    ref, _ = integrate.quad(lambda s: beta(K, t - s) * (s + 1), 0, t, epsabs=1e-14, epsrel=1e-14)
    assert kernel_integral_linear(K, t) == pytest.approx(ref, abs=1e-10)


def test_rectangle_rule_is_first_order():
    errs = []
    for m in (8, 16, 32, 64):
        tau = 1.0 / m
        s = tau * np.arange(1, m + 1)
        approx = float(rectangle_sum(K, tau, list(s + 1)))
        errs.append(abs(approx - kernel_integral_linear(K, 1.0)))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(abs(r - 2) <= 0.15 * 2 for r in ratios), ratios


def test_history_split(space):
    tau = 0.1
    A = assemble_diffusion(space, FormParams.default_for_degree(1)).matrix
    acc = MemoryAccumulator.empty(space, tau, K)
    rhs, c = history_rhs_and_matrix_shift(acc, tau, A)
    assert np.all(rhs == 0) and c == pytest.approx(tau * tau * 0.1)
    rng = np.random.default_rng(1)
    for _ in range(3):
        acc = acc.push(FieldVec(space, rng.standard_normal(space.n_dofs)))
    u_new = FieldVec(space, rng.standard_normal(space.n_dofs))
    rhs, c = history_rhs_and_matrix_shift(acc, tau, A)
    full = tau * (A @ acc.push(u_new).q.coeffs)
    np.testing.assert_allclose(c * (A @ u_new.coeffs) + rhs, full, atol=1e-12)
    off = MemoryAccumulator.empty(space, tau, KernelParams(0.0, 0.1)).push(u_new)
    rhs0, c0 = history_rhs_and_matrix_shift(off, tau, A)
    assert c0 == 0 and np.all(rhs0 == 0)
