"""Manufactured solution, forcing, error norms and convergence studies.

Exact solution on the unit square, linear in time::

    u1 =  x^3 (x-1)^2 y^2 (y-1)(5y-3) (t+1)
    u2 = -x^2 (x-1)(5x-3) y^3 (y-1)^2 (t+1)
    p  =  sin(pi x) cos(pi y) (t+1)

Writing u1 = a(x) b(y) (t+1) and u2 = -a'(x) d(y) (t+1) with d' = b makes
the field exactly divergence free.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial as Poly

from .forms import FormParams
from .memory import KernelParams, kernel_integral_linear
from .mesh import build_uniform_mesh, mesh_from_arrays
from .space import DgSpace, FieldVec, l2_project
from .stepper import PressureCorrection, SchemeParams, SchemeState, StepDiagnostics

CSV_HEADER = [
    "mode", "r", "h", "tau", "err_u_l2", "err_u_dg", "err_p_l2",
    "rate_u_l2", "rate_u_dg", "rate_p_l2",
]

_X = Poly([0.0, 1.0])


class ExactSolution:
    """Closed-form velocity, pressure and the derivatives the forcing needs."""

    def __init__(self, mu: float = 1.0, kernel: KernelParams | None = None):
        self.mu = mu
        self.kernel = kernel or KernelParams()
        self.a = _X**3 * (_X - 1) ** 2
        self.b = _X**2 * (_X - 1) * (5 * _X - 3)
        self.c = self.a.deriv()
        self.d = _X**3 * (_X - 1) ** 2

    @staticmethod
    def time_factor(t):
        return t + 1.0

    def spatial_velocity(self, x, y) -> np.ndarray:
        return np.array([self.a(x) * self.b(y), -self.c(x) * self.d(y)])

    def velocity(self, x, y, t) -> np.ndarray:
        return self.spatial_velocity(x, y) * self.time_factor(t)

    def velocity_at(self, t: float) -> Callable:
        return lambda x, y: self.velocity(x, y, t)

    def pressure(self, x, y, t):
        return np.sin(np.pi * x) * np.cos(np.pi * y) * self.time_factor(t)

    def pressure_at(self, t: float) -> Callable:
        return lambda x, y: self.pressure(x, y, t)

    def velocity_gradient(self, x, y, t) -> np.ndarray:
        """Array G with G[i, j] = d u_i / d x_j."""
        a, b, c, d = self.a, self.b, self.c, self.d
        s = self.time_factor(t)
        return s * np.array([
            [a.deriv()(x) * b(y), a(x) * b.deriv()(y)],
            [-c.deriv()(x) * d(y), -c(x) * d.deriv()(y)],
        ])

    def spatial_laplacian(self, x, y) -> np.ndarray:
        a, b, c, d = self.a, self.b, self.c, self.d
        return np.array([
            a.deriv(2)(x) * b(y) + a(x) * b.deriv(2)(y),
            -(c.deriv(2)(x) * d(y) + c(x) * d.deriv(2)(y)),
        ])

    def laplacian(self, x, y, t) -> np.ndarray:
        return self.spatial_laplacian(x, y) * self.time_factor(t)

    def time_derivative(self, x, y, t) -> np.ndarray:
        return self.spatial_velocity(x, y) * np.ones_like(np.asarray(t, dtype=float))

    def advection(self, x, y, t) -> np.ndarray:
        u = self.velocity(x, y, t)
        g = self.velocity_gradient(x, y, t)
        return np.array([u[0] * g[0, 0] + u[1] * g[0, 1], u[0] * g[1, 0] + u[1] * g[1, 1]])

    def pressure_gradient(self, x, y, t) -> np.ndarray:
        s = self.time_factor(t)
        return np.pi * s * np.array([
            np.cos(np.pi * x) * np.cos(np.pi * y),
            -np.sin(np.pi * x) * np.sin(np.pi * y),
        ])

    def divergence(self, x, y, t):
        g = self.velocity_gradient(x, y, t)
        return g[0, 0] + g[1, 1]

    def memory_factor(self, t: float) -> float:
        return kernel_integral_linear(self.kernel, t)

    def forcing(self, x, y, t) -> np.ndarray:
        """u_t - mu Lap u + (u.grad)u - int_0^t beta(t-s) Lap u(s) ds + grad p."""
        lap_s = self.spatial_laplacian(x, y)
        return (
            self.time_derivative(x, y, t)
            - self.mu * lap_s * self.time_factor(t)
            + self.advection(x, y, t)
            - self.memory_factor(t) * lap_s
            + self.pressure_gradient(x, y, t)
        )


def forcing(params: SchemeParams, x, y, t) -> np.ndarray:
    return ExactSolution(params.mu, params.kernel).forcing(x, y, t)


# ---------------------------------------------------------------------------
# errors


@dataclass(frozen=True)
class ErrorNorms:
    u_l2: float
    u_dg: float
    p_l2: float


def _field_errors(field: FieldVec, exact: Callable, exactness: int, grad: Callable | None = None):
    s = field.space
    vq = s.volume_quad(exactness)
    x, y = vq.points[..., 0], vq.points[..., 1]
    vals = field.values_at_quad(vq)
    ex = np.asarray(exact(x, y), dtype=float)
    ex = ex[..., None] if s.n_components == 1 else np.moveaxis(ex, 0, -1)
    l2 = math.sqrt(float(np.einsum("eq,eqc->", vq.weights, (vals - ex) ** 2)))
    if grad is None:
        return l2, None
    gh = field.grads_at_quad(vq)
    gex = np.moveaxis(np.asarray(grad(x, y), dtype=float), (0, 1), (-2, -1))
    h1 = float(np.einsum("eq,eqcd->", vq.weights, (gh - gex) ** 2))
    return l2, h1


def velocity_jump_energy(u: FieldVec, params: FormParams, exactness: int) -> float:
    """sum_F sigma/h_F ||[u_h]||^2 (the exact velocity has no jumps, even on the boundary)."""
    s = u.space
    fq = s.face_quad(exactness)
    b = u.blocks
    v1 = np.einsum("fqi,fci->fqc", fq.phi1, b[fq.k1])
    v2 = np.einsum("fqi,fci->fqc", fq.phi2, b[np.where(fq.interior, fq.k2, fq.k1)])
    per_face = np.einsum("fq,fqc->f", fq.weights, (v1 - v2) ** 2)
    return float(np.sum(params.face_sigma(fq.interior) / fq.h * per_face))


def error_norms(u: FieldVec, p: FieldVec, exact: ExactSolution, t: float,
                params: FormParams) -> ErrorNorms:
    """L2 and dG velocity errors and L2 pressure error at time ``t``.

    Quadrature exactness is 2r+4 for the velocity degree r.
    """
    ex = 2 * u.space.degree + 4
    u_l2, h1 = _field_errors(u, exact.velocity_at(t), ex,
                             lambda x, y: exact.velocity_gradient(x, y, t))
    jump = velocity_jump_energy(u, params, ex)
    p_l2, _ = _field_errors(p, exact.pressure_at(t), ex)
    return ErrorNorms(u_l2, math.sqrt(h1 + jump), p_l2)


# ---------------------------------------------------------------------------
# single runs and studies


@dataclass(frozen=True)
class MmsResult:
    r: int
    n: int
    h: float
    tau: float
    errors: ErrorNorms
    max_abs_p_mean: float
    wall_time: float
    diagnostics: list[StepDiagnostics] = field(default_factory=list, repr=False)
    projection_errors: ErrorNorms | None = None


def scheme_params(r: int, tau: float, T: float = 1.0, mu: float = 1.0, gamma: float = 0.1,
                  eta: float = 0.1, delta: float | None = None, form_params: FormParams | None = None,
                  tol: float = 1e-10) -> SchemeParams:
    fp = form_params or FormParams.default_for_degree(r)
    return SchemeParams(mu=mu, kernel=KernelParams(gamma, eta), tau=tau, T=T, forms=fp,
                        delta=delta, tol=tol)


def run_mms(r: int, n: int, params: SchemeParams, element_order: np.ndarray | None = None,
            callback: Callable[[SchemeState, StepDiagnostics], None] | None = None) -> MmsResult:
    """Solve the manufactured problem on an n x n mesh with velocity degree r."""
    t0 = time.perf_counter()
    mesh = build_uniform_mesh(n)
    if element_order is not None:
        mesh = mesh_from_arrays(mesh.vertices, mesh.elements[element_order], n)
    vel = DgSpace(mesh, r, 2)
    pres = DgSpace(mesh, r - 1, 1)
    exact = ExactSolution(params.mu, params.kernel)
    scheme = PressureCorrection(vel, pres, params)
    state = scheme.initialize(exact.velocity_at(0.0))
    state, diags = scheme.run(state, exact.forcing, callback=callback)
    errs = error_norms(state.u, state.p, exact, state.t, params.forms)
    pu = l2_project(vel, exact.velocity_at(state.t))
    pp = l2_project(pres, exact.pressure_at(state.t))
    proj = error_norms(pu, pp, exact, state.t, params.forms)
    max_mean = max((abs(d.p_mean) for d in diags), default=0.0)
    return MmsResult(r, n, 1.0 / n, params.tau, errs, max_mean, time.perf_counter() - t0, diags, proj)


def rate(err_coarse: float, err_fine: float) -> float:
    """Observed order for a halving: ln(e_coarse / e_fine) / ln 2."""
    if err_fine <= 0 or err_coarse <= 0:
        return float("nan")
    return math.log(err_coarse / err_fine) / math.log(2.0)


@dataclass(frozen=True)
class ConvergenceRow:
    mode: str
    r: int
    h: float
    tau: float
    err_u_l2: float
    err_u_dg: float
    err_p_l2: float
    rate_u_l2: float | None = None
    rate_u_dg: float | None = None
    rate_p_l2: float | None = None
    clean: bool = True


@dataclass
class StudyResult:
    mode: str
    rows: list[ConvergenceRow]
    results: list[MmsResult]
    truncated_at: int | None = None
    failed: str | None = None

    @property
    def clean_rows(self) -> list[ConvergenceRow]:
        return self.rows if self.truncated_at is None else self.rows[: self.truncated_at]

    def final_rates(self, clean_only: bool = True) -> tuple[float, float, float]:
        last = (self.clean_rows if clean_only else self.rows)[-1]
        return last.rate_u_l2, last.rate_u_dg, last.rate_p_l2

    def asymptotic(self, tol: float = 0.25) -> bool:
        """True if the last two rates of every quantity differ by at most ``tol``."""
        rows = self.clean_rows
        if len(rows) < 3:
            return False
        a, b = rows[-2], rows[-1]
        return all(
            abs(getattr(a, k) - getattr(b, k)) <= tol
            for k in ("rate_u_l2", "rate_u_dg", "rate_p_l2")
        )


def _rows_from_results(mode: str, results: Sequence[MmsResult]) -> list[ConvergenceRow]:
    rows = []
    prev = None
    for res in results:
        e = res.errors
        kw = {}
        if prev is not None:
            kw = dict(
                rate_u_l2=rate(prev.u_l2, e.u_l2),
                rate_u_dg=rate(prev.u_dg, e.u_dg),
                rate_p_l2=rate(prev.p_l2, e.p_l2),
            )
        rows.append(ConvergenceRow(mode, res.r, res.h, res.tau, e.u_l2, e.u_dg, e.p_l2, **kw))
        prev = e
    return rows


def spatial_floor_exceeded(res: MmsResult, fraction: float = 0.1) -> bool:
    """True if the projection error (a spatial floor estimate) tops ``fraction`` of the error."""
    pe, e = res.projection_errors, res.errors
    if pe is None:
        return False
    return pe.u_l2 > fraction * e.u_l2 or pe.p_l2 > fraction * e.p_l2


def convergence_study(mode: str, r: int, ladder: Sequence, fixed, T: float = 1.0, mu: float = 1.0,
                      gamma: float = 0.1, eta: float = 0.1, delta: float | None = None,
                      form_params: FormParams | None = None, tol: float = 1e-10,
                      progress: Callable[[MmsResult], None] | None = None) -> StudyResult:
    """Run a ladder of manufactured-solution solves.

    ``mode="space"``: ``ladder`` holds mesh sizes n (cells per side) and
    ``fixed`` is tau. ``mode="time"``: ``ladder`` holds time steps tau and
    ``fixed`` is n. The time ladder is truncated at the first rung whose
    projection error exceeds 10% of the total error.
    """
    if mode not in ("space", "time"):
        raise ValueError(f"mode must be 'space' or 'time', got {mode!r}")
    if len(ladder) < 3:
        raise ValueError("a convergence ladder needs at least 3 resolutions")
    results: list[MmsResult] = []
    failed = None
    for item in ladder:
        n, tau = (int(item), float(fixed)) if mode == "space" else (int(fixed), float(item))
        params = scheme_params(r, tau, T, mu, gamma, eta, delta, form_params, tol)
        try:
            res = run_mms(r, n, params)
        except Exception as exc:  # keep the partial study
            failed = f"{type(exc).__name__}: {exc}"
            break
        results.append(res)
        if progress is not None:
            progress(res)
    rows = _rows_from_results(mode, results)
    truncated = None
    if mode == "time":
        for i, res in enumerate(results):
            if spatial_floor_exceeded(res):
                truncated = i
                break
        if truncated is not None:
            rows = [replace_clean(row, i < truncated) for i, row in enumerate(rows)]
    return StudyResult(mode, rows, results, truncated, failed)


def replace_clean(row: ConvergenceRow, clean: bool) -> ConvergenceRow:
    d = asdict(row)
    d["clean"] = clean
    return ConvergenceRow(**d)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def study_csv(study: StudyResult, header: Sequence[str] = ()) -> str:
    """CSV text; ``header`` lines are written first as ``#`` comments."""
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    if study.truncated_at is not None:
        buf.write(f"# spatial floor: rungs from index {study.truncated_at} excluded from rates\n")
    if study.failed:
        buf.write(f"# study aborted: {study.failed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in study.rows:
        w.writerow([_fmt(getattr(row, k)) for k in CSV_HEADER])
    return buf.getvalue()


def write_study_csv(study: StudyResult, path: str | Path, header: Sequence[str] = ()) -> None:
    Path(path).write_text(study_csv(study, header), encoding="utf-8")


def render_table(study: StudyResult) -> str:
    """Plain-text table in the layout of the published error tables."""
    def sci(x):
        return f"{x:.3E}"

    def rt(x):
        return "--" if x is None else f"{x:.3f}"

    if study.mode == "time":
        head = f"{'r':>2}  {'tau':>8}  {'|u_h-u|':>10}  {'rate':>6}  {'|p_h-p|':>10}  {'rate':>6}"
        lines = [head, "-" * len(head)]
        for i, row in enumerate(study.rows):
            tau = f"1/{round(1 / row.tau)}"
            mark = "" if row.clean else "  *"
            lines.append(
                f"{(row.r if i == 0 else ''):>2}  {tau:>8}  {sci(row.err_u_l2):>10}  {rt(row.rate_u_l2):>6}  "
                f"{sci(row.err_p_l2):>10}  {rt(row.rate_p_l2):>6}{mark}"
            )
    else:
        head = (f"{'r':>2}  {'h_F':>8}  {'|u_h-u|':>10}  {'rate':>6}  {'|u_h-u|_dG':>10}  {'rate':>6}  "
                f"{'|p_h-p|':>10}  {'rate':>6}")
        lines = [head, "-" * len(head)]
        for i, row in enumerate(study.rows):
            h = f"1/{round(1 / row.h)}"
            lines.append(
                f"{(row.r if i == 0 else ''):>2}  {h:>8}  {sci(row.err_u_l2):>10}  {rt(row.rate_u_l2):>6}  "
                f"{sci(row.err_u_dg):>10}  {rt(row.rate_u_dg):>6}  {sci(row.err_p_l2):>10}  {rt(row.rate_p_l2):>6}"
            )
    return "\n".join(lines)
