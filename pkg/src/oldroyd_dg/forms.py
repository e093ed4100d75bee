"""Interior-penalty dG forms: diffusion, pressure coupling, pressure Poisson,
upwinded convection, lift operators and the dG energy norms.

Jump and average on a face F with neighbours K1, K2 (normal from K1 to K2)::

    [w] = w|K1 - w|K2,   {w} = (w|K1 + w|K2) / 2

and on a boundary face both reduce to the single trace. Matrices follow the
test-row / trial-column convention ``M[i, j] = a(phi_j, phi_i)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .space import DgSpace, FieldVec

_SIGNS = (1.0, -1.0)


class FormError(ValueError):
    pass


@dataclass(frozen=True)
class FormParams:
    """Penalty and symmetry parameters of the interior-penalty forms.

    ``epsilon = -1`` gives the symmetric scheme; ``omega`` is the coercivity
    constant assumed for the velocity form.
    """

    sigma_interior: float = 8.0
    sigma_boundary: float = 16.0
    sigma_tilde: float = 10.0
    epsilon: int = -1

    def __post_init__(self):
        if self.epsilon not in (-1, 0, 1):
            raise FormError(f"epsilon must be in {{-1, 0, 1}}, got {self.epsilon}")
        for name in ("sigma_interior", "sigma_boundary", "sigma_tilde"):
            if not getattr(self, name) > 0:
                raise FormError(f"{name} must be > 0, got {getattr(self, name)}")

    @property
    def omega(self) -> float:
        return 1.0 if self.epsilon == 1 else 0.5

    @classmethod
    def default_for_degree(cls, r: int, **overrides) -> "FormParams":
        if r == 1:
            si = 6.0
        elif r == 2:
            si = 8.0
        else:
            si = 2.0 * (r + 1) ** 2
        kw = dict(sigma_interior=si, sigma_boundary=2.0 * si, sigma_tilde=10.0, epsilon=-1)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def face_sigma(self, interior: np.ndarray) -> np.ndarray:
        return np.where(interior, self.sigma_interior, self.sigma_boundary)


@dataclass(frozen=True)
class AssembledForm:
    """A sparse operator with a note of which form it came from."""

    matrix: sp.csr_matrix
    name: str
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x

    def bilinear(self, trial: FieldVec, test: FieldVec) -> float:
        return float(test.coeffs @ (self.matrix @ trial.coeffs))

    def export_coo(self, path) -> None:
        """Write ``row col value`` lines."""
        m = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write(f"# {self.name} {m.shape[0]} {m.shape[1]} {m.nnz}\n")
            for r, c, v in zip(m.row, m.col, m.data):
                fh.write(f"{r} {c} {v:.17g}\n")


# ---------------------------------------------------------------------------
# sparse scatter helpers


class _Triplets:
    def __init__(self, n_rows: int, n_cols: int):
        self.shape = (n_rows, n_cols)
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, blocks: np.ndarray, row_dofs: np.ndarray, col_dofs: np.ndarray) -> None:
        """Scatter blocks (n, a, b) with row dofs (n, a) and column dofs (n, b)."""
        n, a, b = blocks.shape
        if n == 0:
            return
        self.rows.append(np.broadcast_to(row_dofs[:, :, None], (n, a, b)).ravel())
        self.cols.append(np.broadcast_to(col_dofs[:, None, :], (n, a, b)).ravel())
        self.vals.append(blocks.ravel())

    def tocsr(self) -> sp.csr_matrix:
        if self.rows:
            r = np.concatenate(self.rows)
            c = np.concatenate(self.cols)
            v = np.concatenate(self.vals)
        else:
            r = c = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        m = sp.coo_matrix((v, (r, c)), shape=self.shape).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return m


def _elem_dofs(space: DgSpace, elements: np.ndarray, component: int = 0) -> np.ndarray:
    return space.dof_index(
        np.asarray(elements)[:, None], component, np.arange(space.n_basis)[None, :]
    )


def scalar_to_vector(matrix: sp.spmatrix, space: DgSpace) -> sp.csr_matrix:
    """Block-diagonal vector operator acting identically on each component."""
    nb = space.n_basis
    m = matrix.tocoo()
    out = _Triplets(space.n_dofs, space.n_dofs)
    re, ri = np.divmod(m.row, nb)
    ce, ci = np.divmod(m.col, nb)
    for c in range(space.n_components):
        out.rows.append(space.dof_index(re, c, ri))
        out.cols.append(space.dof_index(ce, c, ci))
        out.vals.append(m.data)
    return out.tocsr()


def _scalar_view(space: DgSpace) -> DgSpace:
    if not space.is_vector:
        return space
    key = ("scalar_view",)
    cache = space._quad_cache
    if key not in cache:
        s = DgSpace(space.mesh, space.degree, 1)
        s._quad_cache = cache  # quadrature data is component independent
        cache[key] = s
    return cache[key]


def _face_avg(fq) -> np.ndarray:
    return np.where(fq.interior, 0.5, 1.0)


def _sides(fq):
    """(phi, grad, element, sign) for side 1 and 2."""
    return (
        (fq.phi1, fq.grad1, fq.k1, 1.0),
        (fq.phi2, fq.grad2, np.where(fq.interior, fq.k2, fq.k1), -1.0),
    )


def _select(mask: np.ndarray, *arrays):
    return [a[mask] for a in arrays]


# ---------------------------------------------------------------------------
# elliptic forms


def _scalar_ip_matrix(space: DgSpace, sigma_face: np.ndarray, epsilon: float,
                      face_mask: np.ndarray, include_consistency: bool = True) -> sp.csr_matrix:
    """Scalar interior-penalty matrix over the faces in ``face_mask``."""
    s = _scalar_view(space)
    vq = s.volume_quad()
    fq = s.face_quad()
    E = s.mesh.n_elements
    trip = _Triplets(s.n_dofs, s.n_dofs)
    K = np.einsum("eq,eqid,eqjd->eij", vq.weights, vq.grad, vq.grad)
    dofs = _elem_dofs(s, np.arange(E))
    trip.add(K, dofs, dofs)

    sel = np.flatnonzero(face_mask)
    w = fq.weights[sel]
    n = fq.normals[sel]
    avg = _face_avg(fq)[sel]
    pen = (sigma_face / fq.h)[sel]
    interior = fq.interior[sel]
    sides = _sides(fq)
    for a, (pa, ga, ka, sa) in enumerate(sides):
        pa, ga, ka = pa[sel], ga[sel], ka[sel]
        dna = np.einsum("fqid,fd->fqi", ga, n)
        for b, (pb, gb, kb, sb) in enumerate(sides):
            pb, gb, kb = pb[sel], gb[sel], kb[sel]
            keep = interior if (a or b) else np.ones_like(interior)
            if not keep.any():
                continue
            dnb = np.einsum("fqjd,fd->fqj", gb, n)
            blk = np.einsum("fq,fqi,fqj->fij", w * pen[:, None] * sa * sb, pa, pb)
            if include_consistency:
                blk -= np.einsum("fq,fqi,fqj->fij", w * (avg * sa)[:, None], pa, dnb)
                blk += epsilon * np.einsum("fq,fqi,fqj->fij", w * (avg * sb)[:, None], dna, pb)
            trip.add(blk[keep], _elem_dofs(s, ka[keep]), _elem_dofs(s, kb[keep]))
    mat = trip.tocsr()
    if epsilon == -1.0 or not include_consistency:
        # symmetric form: remove roundoff asymmetry from the reduction order
        mat = ((mat + mat.T) * 0.5).tocsr()
        mat.sort_indices()
    return mat


def diffusion_scalar(space: DgSpace, params: FormParams) -> sp.csr_matrix:
    """A_eps on one scalar component, over all faces."""
    fq = _scalar_view(space).face_quad()
    return _scalar_ip_matrix(space, params.face_sigma(fq.interior), params.epsilon,
                             np.ones(len(fq.h), dtype=bool))


def assemble_diffusion(space: DgSpace, params: FormParams) -> AssembledForm:
    """Matrix of A_eps(u, w) on the velocity space (A_d when epsilon = -1)."""
    mat = scalar_to_vector(diffusion_scalar(space, params), space)
    return AssembledForm(mat, "diffusion", {"epsilon": params.epsilon,
                                            "sigma": (params.sigma_interior, params.sigma_boundary)})


def assemble_pressure_poisson(space: DgSpace, params: FormParams) -> AssembledForm:
    """Matrix of A_sip(v, g): symmetric interior penalty over interior faces only."""
    if space.is_vector:
        raise FormError("A_sip acts on the scalar pressure space")
    fq = space.face_quad()
    mat = _scalar_ip_matrix(space, np.full(len(fq.h), params.sigma_tilde), -1.0, fq.interior)
    return AssembledForm(mat, "pressure_poisson", {"sigma_tilde": params.sigma_tilde})


def dg_norm_matrix(space: DgSpace, params: FormParams) -> sp.csr_matrix:
    """Gram matrix of the velocity dG norm (all faces)."""
    fq = _scalar_view(space).face_quad()
    sc = _scalar_ip_matrix(space, params.face_sigma(fq.interior), 0.0,
                           np.ones(len(fq.h), dtype=bool), include_consistency=False)
    return scalar_to_vector(sc, space) if space.is_vector else sc


def dg_seminorm_matrix(space: DgSpace, params: FormParams) -> sp.csr_matrix:
    """Gram matrix of the pressure dG semi-norm (interior faces only)."""
    fq = space.face_quad()
    return _scalar_ip_matrix(space, np.full(len(fq.h), params.sigma_tilde), 0.0,
                             fq.interior, include_consistency=False)


def dg_norm(w: FieldVec, params: FormParams) -> float:
    c = w.coeffs
    return float(np.sqrt(max(c @ (dg_norm_matrix(w.space, params) @ c), 0.0)))


def dg_seminorm(g: FieldVec, params: FormParams) -> float:
    if g.space.is_vector:
        raise FormError("dG semi-norm is defined on the scalar space")
    c = g.coeffs
    return float(np.sqrt(max(c @ (dg_seminorm_matrix(g.space, params) @ c), 0.0)))


# ---------------------------------------------------------------------------
# pressure coupling and lifts


def _check_pair(vel: DgSpace, pres: DgSpace) -> None:
    if not vel.is_vector or pres.is_vector:
        raise FormError("expected a vector velocity space and a scalar pressure space")
    if not vel.same_mesh(pres):
        raise FormError("velocity and pressure spaces are on different meshes")


def _quad_pair(vel: DgSpace, pres: DgSpace):
    ex = vel.degree + pres.degree + 2
    return vel.volume_quad(ex), pres.volume_quad(ex), vel.face_quad(ex), pres.face_quad(ex)


def _coupling_volume(vel: DgSpace, pres: DgSpace, form: str) -> _Triplets:
    vqv, vqp, _, _ = _quad_pair(vel, pres)
    E = vel.mesh.n_elements
    trip = _Triplets(pres.n_dofs, vel.n_dofs)
    rows = _elem_dofs(pres, np.arange(E))
    for c in range(2):
        if form == "divergence":
            blk = np.einsum("eq,eqi,eqj->eij", vqv.weights, vqp.phi, vqv.grad[..., c])
        else:
            blk = -np.einsum("eq,eqi,eqj->eij", vqv.weights, vqp.grad[..., c], vqv.phi)
        trip.add(blk, rows, _elem_dofs(vel, np.arange(E), c))
    return trip


def _jump_avg_face(vel: DgSpace, pres: DgSpace, which: str) -> _Triplets:
    """Face moments of a jump paired with an average.

    ``which == "avg_g_jump_w"``: sum_F int {g} [w].n over all faces,
    ``which == "avg_w_jump_g"``: sum_F int {w}.n [g] over interior faces.
    Rows are pressure dofs, columns velocity dofs.
    """
    _, _, fqv, fqp = _quad_pair(vel, pres)
    trip = _Triplets(pres.n_dofs, vel.n_dofs)
    avg = _face_avg(fqv)
    mask = np.ones(len(avg), dtype=bool) if which == "avg_g_jump_w" else fqv.interior
    sel = np.flatnonzero(mask)
    w = fqv.weights[sel]
    n = fqv.normals[sel]
    interior = fqv.interior[sel]
    sv = _sides(fqv)
    spp = _sides(fqp)
    for a in range(2):
        pg, _, ka, sa = spp[a]
        pg, ka = pg[sel], ka[sel]
        for b in range(2):
            pw, _, kb, sb = sv[b]
            pw, kb = pw[sel], kb[sel]
            keep = interior if (a or b) else np.ones_like(interior)
            if not keep.any():
                continue
            if which == "avg_g_jump_w":
                coef = w * (avg[sel] * sb)[:, None]
            else:
                coef = w * (avg[sel] * sa)[:, None]
            for c in range(2):
                blk = np.einsum("fq,fqi,fqj->fij", coef * n[:, c:c + 1], pg, pw)
                trip.add(blk[keep], _elem_dofs(pres, ka[keep]), _elem_dofs(vel, kb[keep], c))
    return trip


def lift_R_matrix(vel: DgSpace, pres: DgSpace) -> sp.csr_matrix:
    """Coefficients of R_h([w]) in the orthonormal pressure basis: R @ w."""
    _check_pair(vel, pres)
    return _jump_avg_face(vel, pres, "avg_g_jump_w").tocsr()


def lift_G_matrix(vel: DgSpace, pres: DgSpace) -> sp.csr_matrix:
    """Coefficients of G_h([beta]) in the orthonormal velocity basis: G @ beta."""
    _check_pair(vel, pres)
    return _jump_avg_face(vel, pres, "avg_w_jump_g").tocsr().T.tocsr()


def broken_divergence_matrix(vel: DgSpace, pres: DgSpace) -> sp.csr_matrix:
    """(div_h w, g) as a (pressure x velocity) matrix."""
    _check_pair(vel, pres)
    return _coupling_volume(vel, pres, "divergence").tocsr()


def broken_gradient_matrix(vel: DgSpace, pres: DgSpace) -> sp.csr_matrix:
    """-(grad_h g, w) as a (pressure x velocity) matrix."""
    _check_pair(vel, pres)
    return _coupling_volume(vel, pres, "gradient").tocsr()


def assemble_pressure_coupling(vel: DgSpace, pres: DgSpace, form: str = "divergence") -> AssembledForm:
    """Matrix B with ``B[i, j] = b(phi_j, psi_i)``.

    ``form="divergence"`` builds b from the broken divergence and the
    ``{g}[w].n`` face term over all faces; ``form="gradient"`` builds it from
    the broken gradient and the ``{w}.n [g]`` term over interior faces. Both
    represent the same bilinear form.
    """
    _check_pair(vel, pres)
    if form == "divergence":
        mat = broken_divergence_matrix(vel, pres) - lift_R_matrix(vel, pres)
    elif form == "gradient":
        mat = broken_gradient_matrix(vel, pres) + _jump_avg_face(vel, pres, "avg_w_jump_g").tocsr()
    else:
        raise FormError(f"unknown coupling form {form!r}")
    mat = mat.tocsr()
    mat.sort_indices()
    return AssembledForm(mat, "pressure_coupling", {"form": form})


def lift_R(w: FieldVec, pres: DgSpace) -> FieldVec:
    return FieldVec(pres, lift_R_matrix(w.space, pres) @ w.coeffs)


def lift_G(beta: FieldVec, vel: DgSpace) -> FieldVec:
    return FieldVec(vel, lift_G_matrix(vel, beta.space) @ beta.coeffs)


def jump_energy(w: FieldVec, interior_only: bool = False) -> float:
    """sum_F h_F^{-1} ||[w]||^2_F, the right-hand side of the lift bounds."""
    s = _scalar_view(w.space)
    fq = s.face_quad()
    b = w.blocks
    j1 = np.einsum("fqi,fci->fqc", fq.phi1, b[fq.k1])
    j2 = np.einsum("fqi,fci->fqc", fq.phi2, b[np.where(fq.interior, fq.k2, fq.k1)])
    jump = j1 - j2
    per_face = np.einsum("fq,fqc->f", fq.weights, jump**2) / fq.h
    if interior_only:
        per_face = per_face[fq.interior]
    return float(per_face.sum())


# ---------------------------------------------------------------------------
# convection


def _face_traces(f: FieldVec, fq):
    b = f.blocks
    v1 = np.einsum("fqi,fci->fqc", fq.phi1, b[fq.k1])
    v2 = np.einsum("fqi,fci->fqc", fq.phi2, b[np.where(fq.interior, fq.k2, fq.k1)])
    return v1, v2


def _face_avg_jump(f: FieldVec, fq):
    v1, v2 = _face_traces(f, fq)
    interior = fq.interior[:, None, None]
    avg = np.where(interior, 0.5 * (v1 + v2), v1)
    jump = v1 - v2  # v2 is zero on the boundary
    return avg, jump


def _check_vel(*fields: FieldVec) -> DgSpace:
    s = fields[0].space
    for f in fields:
        if f.space is not s:
            raise FormError("convection arguments must live on the same velocity space")
    if not s.is_vector:
        raise FormError("convection acts on the vector velocity space")
    return s


def _upwind_weights(theta: FieldVec, z: FieldVec, fq, mode: str):
    """Per-side weights on the inflow part of each face.

    Returns a list over sides (1, 2) of arrays (F, Qf) equal to
    ``|{z}.n_K|`` (mode ``"abs"``) or ``{z}.n_K`` (mode ``"signed"``) where
    ``{theta}.n_K < 0`` and zero elsewhere.
    """
    th_avg, _ = _face_avg_jump(theta, fq)
    z_avg, _ = _face_avg_jump(z, fq)
    th_n = np.einsum("fqc,fc->fq", th_avg, fq.normals)
    z_n = np.einsum("fqc,fc->fq", z_avg, fq.normals)
    out = []
    for sign in _SIGNS:
        inflow = sign * th_n < 0.0
        zk = sign * z_n
        val = np.abs(zk) if mode == "abs" else zk
        wts = np.where(inflow, val, 0.0)
        if sign < 0:
            wts = np.where(fq.interior[:, None], wts, 0.0)
        out.append(wts)
    return out


def _convection_scalar(theta: FieldVec, z: FieldVec, part: str) -> sp.csr_matrix:
    space = _check_vel(theta, z)
    s = _scalar_view(space)
    vq = s.volume_quad()
    fq = s.face_quad()
    E = s.mesh.n_elements
    trip = _Triplets(s.n_dofs, s.n_dofs)
    if part in ("full", "central"):
        zv = z.values_at_quad(vq)
        divz = np.einsum("eqcc->eq", z.grads_at_quad(vq))
        adv = np.einsum("eqd,eqjd->eqj", zv, vq.grad)
        blk = np.einsum("eq,eqi,eqj->eij", vq.weights, vq.phi, adv)
        blk += 0.5 * np.einsum("eq,eqi,eqj->eij", vq.weights * divz, vq.phi, vq.phi)
        dofs = _elem_dofs(s, np.arange(E))
        trip.add(blk, dofs, dofs)
        _, zj = _face_avg_jump(z, fq)
        zjn = np.einsum("fqc,fc->fq", zj, fq.normals)
        coef = -0.5 * fq.weights * zjn * _face_avg(fq)[:, None]
        for phi, _, k, sign in _sides(fq):
            keep = fq.interior if sign < 0 else np.ones_like(fq.interior)
            blk = np.einsum("fq,fqi,fqj->fij", coef, phi, phi)
            trip.add(blk[keep], _elem_dofs(s, k[keep]), _elem_dofs(s, k[keep]))
    if part in ("full", "upwind"):
        mode = "abs" if part == "full" else "signed"
        uw = _upwind_weights(theta, z, fq, mode)
        sides = _sides(fq)
        for a in range(2):
            pa, _, ka, _ = sides[a]
            pb, _, kb, _ = sides[1 - a]
            coef = fq.weights * uw[a]
            keep = fq.interior if a == 1 else np.ones_like(fq.interior)
            own = np.einsum("fq,fqi,fqj->fij", coef, pa, pa)
            trip.add(own[keep], _elem_dofs(s, ka[keep]), _elem_dofs(s, ka[keep]))
            ext = -np.einsum("fq,fqi,fqj->fij", coef, pa, pb)
            ki = fq.interior
            trip.add(ext[ki], _elem_dofs(s, ka[ki]), _elem_dofs(s, kb[ki]))
    return trip.tocsr()


def convection_scalar(theta: FieldVec, z: FieldVec) -> sp.csr_matrix:
    """Per-component matrix of phi, w -> A_c(theta; z, phi, w)."""
    return _convection_scalar(theta, z, "full")


def assemble_convection(theta: FieldVec, z: FieldVec | None = None) -> AssembledForm:
    """Matrix ``C[i, j] = A_c(theta; z, phi_j, phi_i)``; ``z`` defaults to ``theta``."""
    z = theta if z is None else z
    mat = scalar_to_vector(convection_scalar(theta, z), theta.space)
    return AssembledForm(mat, "convection")


def assemble_central(z: FieldVec) -> AssembledForm:
    mat = scalar_to_vector(_convection_scalar(z, z, "central"), z.space)
    return AssembledForm(mat, "convection_central")


def assemble_upwind(theta: FieldVec, z: FieldVec) -> AssembledForm:
    mat = scalar_to_vector(_convection_scalar(theta, z, "upwind"), z.space)
    return AssembledForm(mat, "convection_upwind")


def central_form(z: FieldVec, phi: FieldVec, w: FieldVec) -> float:
    """Matrix-free value of the non-upwind part of the convection form."""
    space = _check_vel(z, phi, w)
    s = _scalar_view(space)
    vq = s.volume_quad()
    fq = s.face_quad()
    zv = z.values_at_quad(vq)
    gphi = phi.grads_at_quad(vq)
    pv = phi.values_at_quad(vq)
    wv = w.values_at_quad(vq)
    divz = np.einsum("eqcc->eq", z.grads_at_quad(vq))
    vol = np.einsum("eq,eqd,eqcd,eqc->", vq.weights, zv, gphi, wv)
    vol += 0.5 * np.einsum("eq,eq,eqc,eqc->", vq.weights, divz, pv, wv)
    _, zj = _face_avg_jump(z, fq)
    p1, p2 = _face_traces(phi, fq)
    w1, w2 = _face_traces(w, fq)
    prod1 = np.einsum("fqc,fqc->fq", p1, w1)
    prod2 = np.einsum("fqc,fqc->fq", p2, w2)
    avg_pw = np.where(fq.interior[:, None], 0.5 * (prod1 + prod2), prod1)
    face = -0.5 * np.einsum("fq,fq,fq->", fq.weights, np.einsum("fqc,fc->fq", zj, fq.normals), avg_pw)
    return float(vol + face)


def _upwind_value(theta, z, phi, w, mode) -> float:
    s = _scalar_view(z.space)
    fq = s.face_quad()
    uw = _upwind_weights(theta, z, fq, mode)
    p1, p2 = _face_traces(phi, fq)
    w1, w2 = _face_traces(w, fq)
    # side 1 interior trace is p1, exterior p2 (zero on the boundary); side 2 the reverse
    t1 = np.einsum("fqc,fqc->fq", p1 - p2, w1)
    t2 = np.einsum("fqc,fqc->fq", p2 - p1, w2)
    return float(np.sum(fq.weights * (uw[0] * t1 + uw[1] * t2)))


def upwind_form(theta: FieldVec, z: FieldVec, phi: FieldVec, w: FieldVec) -> float:
    """Matrix-free value of the signed upwind part U(theta; z, phi, w)."""
    _check_vel(theta, z, phi, w)
    return _upwind_value(theta, z, phi, w, "signed")


def apply_convection(theta: FieldVec, z: FieldVec, phi: FieldVec, w: FieldVec) -> float:
    """Matrix-free value of A_c(theta; z, phi, w)."""
    _check_vel(theta, z, phi, w)
    return central_form(z, phi, w) + _upwind_value(theta, z, phi, w, "abs")
