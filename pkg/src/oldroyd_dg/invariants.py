"""Randomized checks of the structural properties of the discrete forms."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import forms
from .mesh import build_uniform_mesh
from .space import DgSpace, FieldVec


@dataclass(frozen=True)
class InvariantResult:
    name: str
    worst: float
    tolerance: float
    passed: bool
    samples: int

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst={self.worst:.3e} tol={self.tolerance:.1e} samples={self.samples}"


def face_sum_avg_g_jump_w(w: FieldVec, g: FieldVec) -> float:
    """sum over all faces of int {g} [w].n, evaluated from traces."""
    fqv = w.space.face_quad(2 * w.space.degree + 2)
    fqp = g.space.face_quad(2 * w.space.degree + 2)
    w1, w2 = forms._face_traces(w, fqv)
    g1, g2 = forms._face_traces(g, fqp)
    interior = fqv.interior[:, None]
    gavg = np.where(interior, 0.5 * (g1[..., 0] + g2[..., 0]), g1[..., 0])
    wjn = np.einsum("fqc,fc->fq", w1 - w2, fqv.normals)
    return float(np.sum(fqv.weights * gavg * wjn))


def face_sum_avg_w_jump_g(w: FieldVec, g: FieldVec) -> float:
    """sum over interior faces of int {w}.n [g], evaluated from traces."""
    fqv = w.space.face_quad(2 * w.space.degree + 2)
    fqp = g.space.face_quad(2 * w.space.degree + 2)
    w1, w2 = forms._face_traces(w, fqv)
    g1, g2 = forms._face_traces(g, fqp)
    m = fqv.interior
    wavg_n = np.einsum("fqc,fc->fq", 0.5 * (w1 + w2), fqv.normals)
    return float(np.sum((fqv.weights * wavg_n * (g1[..., 0] - g2[..., 0]))[m]))


def verify_forms(r: int = 2, n: int = 4, seed: int = 0, samples: int = 100,
                 params: forms.FormParams | None = None) -> list[InvariantResult]:
    """Run every randomized invariant once and report the worst sample.

    Coercivity of the velocity form is checked with the omega that belongs to
    ``params.epsilon``.
    """
    params = params or forms.FormParams.default_for_degree(r)
    rng = np.random.default_rng(seed)
    mesh = build_uniform_mesh(n)
    V = DgSpace(mesh, r, 2)
    P = DgSpace(mesh, r - 1, 1)

    A = forms.assemble_diffusion(V, params).matrix
    S = forms.assemble_pressure_poisson(P, params).matrix
    N = forms.dg_norm_matrix(V, params)
    Ns = forms.dg_seminorm_matrix(P, params)
    Bdiv = forms.assemble_pressure_coupling(V, P, "divergence").matrix
    Bgrad = forms.assemble_pressure_coupling(V, P, "gradient").matrix
    D = forms.broken_divergence_matrix(V, P)
    Gr = forms.broken_gradient_matrix(V, P)

    def rand(space):
        return FieldVec(space, rng.standard_normal(space.n_dofs))

    out: list[InvariantResult] = []

    def record(name, values, tol, lower_bound=False):
        values = np.asarray(values, dtype=float)
        worst = float(values.min() if lower_bound else np.abs(values).max())
        passed = bool(worst >= tol) if lower_bound else bool(worst <= tol)
        out.append(InvariantResult(name, worst, tol, passed, len(values)))

    pos, split = [], []
    for _ in range(samples):
        z, phi, w = rand(V), rand(V), rand(V)
        pos.append(forms.apply_convection(z, z, phi, phi))
        whole = forms.apply_convection(z, z, phi, w)
        split.append(whole - (forms.central_form(z, phi, w) - forms.upwind_form(z, z, phi, w)))
    record("convection positivity A_c(z;z,phi,phi) >= -1e-10", pos, -1e-10, lower_bound=True)
    record("convection split A_c = C - U", split, 1e-10)

    # symmetry is a property of the symmetric variant only
    Ad = A if params.epsilon == -1 else forms.assemble_diffusion(V, replace(params, epsilon=-1)).matrix
    record("A_d symmetry max|A - A^T|", [abs(Ad - Ad.T).max()], 1e-12)
    record("A_sip symmetry max|A - A^T|", [abs(S - S.T).max()], 1e-12)

    # both bounds are homogeneous of degree two, so samples are scaled to unit
    # (semi-)norm and the tolerance is measured against O(1) values
    coer_v, coer_p = [], []
    for _ in range(samples):
        w = rng.standard_normal(V.n_dofs)
        g = rng.standard_normal(P.n_dofs)
        w /= np.sqrt(w @ (N @ w))
        g /= np.sqrt(g @ (Ns @ g))
        coer_v.append(w @ (A @ w) - params.omega)
        coer_p.append(g @ (S @ g) - 0.5)
    record(f"coercivity A_eps(w,w) - {params.omega}|w|_dG^2 >= -1e-10", coer_v, -1e-10, lower_bound=True)
    record("coercivity A_sip(g,g) - 0.5|g|_dG^2 >= -1e-10", coer_p, -1e-10, lower_bound=True)

    eq_forms, eq_r, eq_g, lift_r, lift_g = [], [], [], [], []
    for _ in range(samples):
        w, g = rand(V), rand(P)
        b = g.coeffs @ (Bdiv @ w.coeffs)
        eq_forms.append(b - g.coeffs @ (Bgrad @ w.coeffs))
        Rw = forms.lift_R(w, P)
        Gg = forms.lift_G(g, V)
        eq_r.append(b - (g.coeffs @ (D @ w.coeffs) - Rw.coeffs @ g.coeffs))
        eq_g.append(b - (g.coeffs @ (Gr @ w.coeffs) + Gg.coeffs @ w.coeffs))
        lift_r.append(Rw.coeffs @ g.coeffs - face_sum_avg_g_jump_w(w, g))
        lift_g.append(Gg.coeffs @ w.coeffs - face_sum_avg_w_jump_g(w, g))
    record("b divergence form == b gradient form", eq_forms, 1e-10)
    record("b(w,g) == (div_h w - R_h[w], g)", eq_r, 1e-10)
    record("b(w,g) == -(grad_h g, w) + (G_h[g], w)", eq_g, 1e-10)
    record("lift R_h defining identity", lift_r, 1e-10)
    record("lift G_h defining identity", lift_g, 1e-10)
    return out
