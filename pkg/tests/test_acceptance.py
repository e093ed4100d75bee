"""Acceptance gate: one test per criterion, each at its stated tolerance.

Every test reports a PASS/FAIL line that is repeated in the terminal
summary. The studies are the slow part of the suite (several minutes on one
core).
"""
import math

import numpy as np
import pytest

from oldroyd_dg.cli import main
from oldroyd_dg.forms import FormParams
from oldroyd_dg.invariants import verify_forms
from oldroyd_dg.memory import KernelParams, MemoryAccumulator, kernel_integral_linear, rectangle_sum
from oldroyd_dg.mesh import build_uniform_mesh
from oldroyd_dg.mms import ExactSolution, convergence_study, render_table, run_mms, scheme_params
from oldroyd_dg.space import DgSpace, FieldVec
from oldroyd_dg.stepper import PressureCorrection, SchemeParams, discrete_energy


def _in(x, lo, hi):
    return lo <= x <= hi


def _spatial(report, criterion, r, ladder, tau, bands):
    study = convergence_study("space", r, ladder, tau)
    print(render_table(study))
    assert study.failed is None, study.failed
    rates = study.final_rates()
    ok = [_in(x, *b) for x, b in zip(rates, bands)]
    names = ("u L2", "u dG", "p L2")
    detail = ", ".join(f"{nm} {x:.3f} in [{b[0]}, {b[1]}]" for nm, x, b in zip(names, rates, bands))
    report(criterion, all(ok), f"P{r}-P{r - 1} spatial final-rung rates: {detail}")
    assert all(ok), detail


def test_criterion_1_spatial_p1(acceptance_report):
    _spatial(acceptance_report, 1, 1, [4, 8, 16, 32], 1 / 2**8, [(1.8, 2.3), (0.85, 1.2), (0.85, 1.2)])


def test_criterion_2_spatial_p2(acceptance_report):
    _spatial(acceptance_report, 2, 2, [2, 4, 8, 16], 1 / 2**9, [(2.7, 3.2), (1.85, 2.2), (1.85, 2.2)])


def test_criterion_3_temporal_p2(acceptance_report):
    study = convergence_study("time", 2, [1 / 2**k for k in range(3, 7)], 64)
    print(render_table(study))
    assert study.failed is None, study.failed
    clean = study.clean_rows
    enough = len(clean) >= 3
    rates_u = [row.rate_u_l2 for row in clean[1:]]
    rates_p = [row.rate_p_l2 for row in clean[1:]]
    ok = enough and rates_u[-1] >= 1.5 and rates_p[-1] >= 1.2
    detail = (f"{len(clean)} clean rungs; velocity rates {', '.join(f'{x:.3f}' for x in rates_u)} (need >= 1.5), "
              f"pressure rates {', '.join(f'{x:.3f}' for x in rates_p)} (need >= 1.2)")
    acceptance_report(3, ok, detail)
    assert ok, detail


def test_criterion_4_invariants(acceptance_report):
    failures, count, worst = [], 0, {}
    for r in (1, 2):
        for eps in (-1, 0, 1):
            for res in verify_forms(r=r, n=4, seed=20240101, samples=100,
                                    params=FormParams.default_for_degree(r, epsilon=eps)):
                count += 1
                assert res.samples >= 100 or "symmetry" in res.name
                if not res.passed:
                    failures.append(f"r={r} eps={eps} {res.name} ({res.worst:.3e})")
    ok = not failures
    acceptance_report(4, ok, f"{count - len(failures)}/{count} invariant checks passed"
                      + ("" if ok else ": " + "; ".join(failures)))
    assert ok, failures


def test_criterion_5_zero_mean_pressure(acceptance_report):
    res = run_mms(2, 16, scheme_params(2, 1 / 2**5, 1.0))
    ok = res.max_abs_p_mean <= 1e-9
    acceptance_report(5, ok, f"max_n |int p_h^n| = {res.max_abs_p_mean:.3e} over {len(res.diagnostics)} steps (need <= 1e-9)")
    assert ok


def test_criterion_6_memory_oracle(acceptance_report):
    kernel = KernelParams(0.1, 0.1)
    space = DgSpace(build_uniform_mesh(4), 2, 2)
    rng = np.random.default_rng(6)
    tau = 1 / 50
    acc = MemoryAccumulator.empty(space, tau, kernel)
    history, dev = [], 0.0
    for _ in range(50):
        u = FieldVec(space, rng.standard_normal(space.n_dofs))
        history.append(u.coeffs)
        acc = acc.push(u)
        dev = max(dev, float(np.abs(acc.q.coeffs - rectangle_sum(kernel, tau, history)).max()))
    errs = []
    for m in (8, 16, 32, 64):
        s = np.arange(1, m + 1) / m
        errs.append(abs(float(rectangle_sum(kernel, 1 / m, list(s + 1))) - kernel_integral_linear(kernel, 1.0)))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    ok = dev <= 1e-12 and all(abs(q - 2) <= 0.3 for q in ratios)
    acceptance_report(6, ok, f"recursion vs direct sum max deviation {dev:.2e} (need <= 1e-12); "
                      f"rectangle-rule error ratios {', '.join(f'{q:.3f}' for q in ratios)} (need 2 +- 15%)")
    assert ok


def test_criterion_7_energy_bounded(acceptance_report):
    r, n, tau = 2, 8, 1 / 100
    fp = FormParams.default_for_degree(r)
    params = SchemeParams(tau=tau, T=1.0, forms=fp)
    mesh = build_uniform_mesh(n)
    scheme = PressureCorrection(DgSpace(mesh, r, 2), DgSpace(mesh, r - 1, 1), params)
    state = scheme.initialize(ExactSolution().velocity_at(0.0))
    u0 = state.u.l2_norm()
    state, diags = scheme.run(state)
    assert len(diags) == 100
    energy = discrete_energy([d.u_l2 for d in diags], [d.u_tilde_dg for d in diags],
                             params.omega, params.mu, tau, u0)
    ratio = float(energy.max() / energy[0])
    ok = math.isfinite(ratio) and ratio <= 10
    acceptance_report(7, ok, f"max_m E^m / E^0 = {ratio:.4f} over 100 steps (need <= 10)")
    assert ok


def test_criterion_8_determinism(tmp_path, acceptance_report):
    runs = {
        "study": ["--mode", "study-space", "--r", "2", "--n-ladder", "2,4,8", "--tau", "1/16"],
        "forms": ["--mode", "verify-forms", "--seed", "7"],
        "run": ["--mode", "run", "--n", "4", "--tau", "1/8"],
    }
    same = {}
    for name, argv in runs.items():
        a, b = tmp_path / f"{name}_a.csv", tmp_path / f"{name}_b.csv"
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        same[name] = a.read_bytes() == b.read_bytes()
    ok = all(same.values())
    acceptance_report(8, ok, "bitwise-identical CSV across two runs: "
                      + ", ".join(f"{k} {'yes' if v else 'NO'}" for k, v in same.items()))
    assert ok
