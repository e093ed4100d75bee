import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from oldroyd_dg.forms import FormParams
from oldroyd_dg.memory import KernelParams
from oldroyd_dg.mesh import build_uniform_mesh
from oldroyd_dg.mms import (
    CSV_HEADER,
    ExactSolution,
    convergence_study,
    error_norms,
    rate,
    render_table,
    run_mms,
    scheme_params,
    study_csv,
)
from oldroyd_dg.space import DgSpace, FieldVec, l2_project

EX = ExactSolution(1.0, KernelParams(0.1, 0.1))


# independent transcription of the manufactured fields
def u_ref(x, y, t):
    u1 = x**3 * (x - 1) ** 2 * y**2 * (y - 1) * (5 * y - 3)
    u2 = -(x**2) * (x - 1) * (5 * x - 3) * y**3 * (y - 1) ** 2
    return np.array([u1, u2]) * (t + 1)


def p_ref(x, y, t):
    return math.sin(math.pi * x) * math.cos(math.pi * y) * (t + 1)


def test_velocity_transcription_matches():
    rng = np.random.default_rng(0)
    for x, y, t in rng.random((20, 3)):
        np.testing.assert_allclose(EX.velocity(x, y, t), u_ref(x, y, t), atol=1e-15)
        assert EX.pressure(x, y, t) == pytest.approx(p_ref(x, y, t), abs=1e-15)


def test_divergence_free():
    rng = np.random.default_rng(1)
    pts = rng.random((100, 3))
    div = EX.divergence(pts[:, 0], pts[:, 1], pts[:, 2])
    assert np.abs(div).max() <= 1e-10


def test_boundary_values_and_pressure_mean():
    s = np.linspace(0, 1, 11)
    for x, y in [(0 * s, s), (0 * s + 1, s), (s, 0 * s), (s, 0 * s + 1)]:
        assert np.abs(EX.velocity(x, y, 0.7)).max() <= 1e-15
    mean = integrate.dblquad(lambda y, x: p_ref(x, y, 0.3), 0, 1, 0, 1, epsabs=1e-13)[0]
    assert abs(mean) <= 1e-12


def test_forcing_at_time_zero_has_no_memory():
    x, y = 0.3, 0.6
    direct = (EX.time_derivative(x, y, 0) - EX.laplacian(x, y, 0) + EX.advection(x, y, 0)
              + EX.pressure_gradient(x, y, 0))
    np.testing.assert_allclose(EX.forcing(x, y, 0.0), direct, atol=1e-15)


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_memory_factor_against_quadrature(t):
    ref = integrate.quad(lambda s: 0.1 * math.exp(-0.1 * (t - s)) * (s + 1), 0, t,
                         epsabs=1e-14, epsrel=1e-14)[0]
    assert EX.memory_factor(t) == pytest.approx(ref, abs=1e-10)


def fd_forcing(x, y, t, mu=1.0, gamma=0.1, eta=0.1):
    h1, h2 = 1e-6, 1e-4
    ut = (u_ref(x, y, t + h1) - u_ref(x, y, t - h1)) / (2 * h1)
    ux = (u_ref(x + h1, y, t) - u_ref(x - h1, y, t)) / (2 * h1)
    uy = (u_ref(x, y + h1, t) - u_ref(x, y - h1, t)) / (2 * h1)

    def lap(s):
        c = u_ref(x, y, s)
        return (u_ref(x + h2, y, s) + u_ref(x - h2, y, s) + u_ref(x, y + h2, s)
                + u_ref(x, y - h2, s) - 4 * c) / h2**2

    u = u_ref(x, y, t)
    adv = u[0] * ux + u[1] * uy
    mem = np.array([
        integrate.quad(lambda s: gamma * math.exp(-eta * (t - s)) * lap(s)[c], 0, t, epsabs=1e-12)[0]
        for c in range(2)
    ]) if t > 0 else np.zeros(2)
    px = (p_ref(x + h1, y, t) - p_ref(x - h1, y, t)) / (2 * h1)
    py = (p_ref(x, y + h1, t) - p_ref(x, y - h1, t)) / (2 * h1)
    return ut - mu * lap(t) + adv - mem + np.array([px, py])


@settings(max_examples=15, deadline=None)
@given(x=st.floats(0.05, 0.95), y=st.floats(0.05, 0.95), t=st.floats(0.0, 1.0))
def test_forcing_against_finite_differences(x, y, t):
    np.testing.assert_allclose(EX.forcing(x, y, t), fd_forcing(x, y, t), atol=1e-5)


def test_projection_error_ceiling():
    m = build_uniform_mesh(16)
    V, P = DgSpace(m, 2, 2), DgSpace(m, 1, 1)
    e = error_norms(l2_project(V, EX.velocity_at(1.0)), l2_project(P, EX.pressure_at(1.0)), EX, 1.0,
                    FormParams.default_for_degree(2))
    assert e.u_l2 <= 1e-4
    assert e.p_l2 <= 1e-2


def test_zero_solution_error_is_exact_norm():
    # |u|^2 has degree 18; the error quadrature is exact to degree 8 per element,
    # so a mesh of 16 x 16 squares is needed to resolve it to 1e-8
    m = build_uniform_mesh(16)
    V, P = DgSpace(m, 2, 2), DgSpace(m, 1, 1)
    e = error_norms(V.zeros(), P.zeros(), EX, 1.0, FormParams.default_for_degree(2))
    u_sq = integrate.dblquad(lambda y, x: float(np.sum(u_ref(x, y, 1.0) ** 2)), 0, 1, 0, 1,
                             epsabs=1e-16, epsrel=1e-12)[0]
    assert e.u_l2 == pytest.approx(math.sqrt(u_sq), rel=1e-8)
    # ||2 sin(pi x) cos(pi y)|| = 2 * 1/2
    assert e.p_l2 == pytest.approx(1.0, rel=1e-8)


def test_projection_is_best_approximation():
    m = build_uniform_mesh(4)
    V, P = DgSpace(m, 1, 2), DgSpace(m, 0, 1)
    fp = FormParams.default_for_degree(1)
    pu = l2_project(V, EX.velocity_at(1.0))
    best = error_norms(pu, P.zeros(), EX, 1.0, fp).u_l2
    rng = np.random.default_rng(3)
    for _ in range(5):
        other = FieldVec(V, pu.coeffs + 1e-3 * rng.standard_normal(V.n_dofs))
        assert error_norms(other, P.zeros(), EX, 1.0, fp).u_l2 > best


def test_rate():
    assert rate(4.0, 1.0) == pytest.approx(2.0)
    assert math.isnan(rate(1.0, 0.0))


def test_element_order_does_not_change_errors():
    params = scheme_params(1, 0.25, 1.0)
    a = run_mms(1, 3, params)
    perm = np.random.default_rng(0).permutation(18)
    b = run_mms(1, 3, params, element_order=perm)
    assert b.errors.u_l2 == pytest.approx(a.errors.u_l2, rel=1e-9)
    assert b.errors.p_l2 == pytest.approx(a.errors.p_l2, rel=1e-9)


def test_space_study_output():
    study = convergence_study("space", 2, [2, 4, 8], 1 / 8)
    assert [round(1 / r.h) for r in study.rows] == [2, 4, 8]
    assert study.rows[0].rate_u_l2 is None
    assert all(np.isfinite(study.final_rates()))
    text = study_csv(study, ["note = x"])
    lines = text.splitlines()
    assert lines[0] == "# note = x"
    assert lines[1] == ",".join(CSV_HEADER)
    assert len(lines) == 5
    table = render_table(study)
    assert "1/8" in table and "|u_h-u|_dG" in table


def test_time_study_truncates_at_spatial_floor():
    # on a 2x2 mesh the spatial error dominates quickly
    study = convergence_study("time", 1, [1 / 2, 1 / 4, 1 / 8, 1 / 16], 2)
    assert study.truncated_at is not None
    assert all(not r.clean for r in study.rows[study.truncated_at:])
    assert "spatial floor" in study_csv(study)


def test_study_validation():
    with pytest.raises(ValueError):
        convergence_study("space", 1, [2, 4], 0.5)
    with pytest.raises(ValueError):
        convergence_study("both", 1, [2, 4, 8], 0.5)
