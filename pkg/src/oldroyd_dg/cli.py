"""Command-line driver: single runs, convergence studies and form checks.

Configuration is a flat ``key = value`` text file plus flag overrides.
Lines may carry a leading ``#``, so the comment block echoed at the top of
every output file can be fed back through ``--config`` to reproduce a run.
Lines without ``=`` are ignored.

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 failed study or invariant assertion. Failures print one line
``error: <category>: <message>`` on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import mms
from .forms import FormParams
from .invariants import verify_forms
from .linalg import SolverError
from .memory import KernelParams
from .mesh import build_uniform_mesh
from .space import DgSpace
from .stepper import ParameterError, PressureCorrection, SchemeParams, StepError, delta_bound

log = logging.getLogger("oldroyd_dg")

MODES = ("run", "study-space", "study-time", "verify-forms")
PROBLEMS = ("mms", "zero")

EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_ASSERTION = 3


class ConfigError(ValueError):
    pass


class StudyAssertionError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved parameters of one invocation."""

    mode: str = "run"
    problem: str = "mms"
    r: int = 1
    n: int = 8
    n_ladder: tuple[int, ...] = (4, 8, 16, 32)
    tau: float = 1.0 / 32
    tau_ladder: tuple[float, ...] = (1 / 8, 1 / 16, 1 / 32, 1 / 64)
    T: float = 1.0
    mu: float = 1.0
    gamma: float = 0.1
    eta: float = 0.1
    delta: float = 0.03125
    sigma_int: float = 6.0
    sigma_bnd: float = 12.0
    sigma_tilde: float = 10.0
    epsilon: int = -1
    tol: float = 1e-10
    seed: int = 0
    out: str | None = None

    @property
    def form_params(self) -> FormParams:
        return FormParams(self.sigma_int, self.sigma_bnd, self.sigma_tilde, self.epsilon)

    @property
    def kernel(self) -> KernelParams:
        return KernelParams(self.gamma, self.eta)

    def scheme_params(self, tau: float | None = None) -> SchemeParams:
        return SchemeParams(mu=self.mu, kernel=self.kernel, tau=self.tau if tau is None else tau,
                            T=self.T, forms=self.form_params, delta=self.delta, tol=self.tol)

    def echo(self) -> list[str]:
        """``key = value`` lines for every parameter except the output path."""
        lines = []
        for f in fields(self):
            if f.name == "out":
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(_fmt(x) for x in v)
            lines.append(f"{f.name} = {_fmt(v)}")
        return lines


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


# -- parsing -----------------------------------------------------------------

def _number(key: str, text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"malformed number for {key}: {text!r}") from None


def _integer(key: str, text: str) -> int:
    x = _number(key, text)
    if x != int(x):
        raise ConfigError(f"{key} must be an integer, got {text!r}")
    return int(x)


def _ladder(key: str, text: str, conv) -> tuple:
    items = [s for s in text.replace(" ", "").split(",") if s]
    if not items:
        raise ConfigError(f"empty ladder for {key}")
    return tuple(conv(key, s) for s in items)


_CONVERTERS = {
    "mode": lambda k, s: s.strip(),
    "problem": lambda k, s: s.strip(),
    "r": _integer,
    "n": _integer,
    "n_ladder": lambda k, s: _ladder(k, s, _integer),
    "tau": _number,
    "tau_ladder": lambda k, s: _ladder(k, s, _number),
    "T": _number,
    "mu": _number,
    "gamma": _number,
    "eta": _number,
    "delta": _number,
    "sigma_int": _number,
    "sigma_bnd": _number,
    "sigma_tilde": _number,
    "epsilon": _integer,
    "tol": _number,
    "seed": _integer,
    "out": lambda k, s: s.strip(),
}


def _normalize_key(key: str) -> str:
    k = key.strip().replace("-", "_")
    return k if k == "T" else k.lower()


def read_config_file(path: str | Path) -> dict[str, str]:
    """Raw ``key -> text`` pairs from a config file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    raw = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        s = line.strip()
        if s.startswith("#"):
            s = s[1:].strip()
        if not s or "=" not in s:
            continue
        key, value = s.split("=", 1)
        key = _normalize_key(key)
        if key not in _CONVERTERS:
            raise ConfigError(f"unknown key {key!r} at {p}:{lineno}")
        raw[key] = value.strip()
    return raw


def _mode_defaults(mode: str, r: int | None) -> dict:
    if mode == "study-time":
        return {"r": 2 if r is None else r, "n": 64}
    if mode == "verify-forms":
        return {"r": 2 if r is None else r, "n": 4}
    r = 1 if r is None else r
    d = {"r": r}
    if mode == "study-space":
        if r == 1:
            d.update(n_ladder=(4, 8, 16, 32), tau=1 / 256)
        else:
            d.update(n_ladder=(2, 4, 8, 16), tau=1 / 512)
    return d


def build_config(values: dict) -> RunConfig:
    """Fill defaults around converted ``values`` and validate the result."""
    values = dict(values)
    mode = values.get("mode", "run")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {mode!r}")
    base = _mode_defaults(mode, values.get("r"))
    base.update(values)
    r = base["r"]
    if r < 1:
        raise ConfigError(f"r >= 1 required, got {r}")
    fp_default = FormParams.default_for_degree(r)
    base.setdefault("sigma_int", fp_default.sigma_interior)
    base.setdefault("sigma_bnd", fp_default.sigma_boundary)
    base.setdefault("sigma_tilde", fp_default.sigma_tilde)
    base.setdefault("epsilon", fp_default.epsilon)
    eps = base["epsilon"]
    if eps not in (-1, 0, 1):
        raise ConfigError(f"epsilon must satisfy epsilon in {{-1, 0, 1}}, got {eps}")
    omega = 1.0 if eps == 1 else 0.5
    for key in ("mu", "eta", "tau", "T", "tol", "sigma_int", "sigma_bnd", "sigma_tilde"):
        if key in base and not base[key] > 0:
            raise ConfigError(f"{key} > 0 required, got {base[key]}")
    if base.get("gamma", 0.1) < 0:
        raise ConfigError(f"gamma >= 0 required, got {base['gamma']}")
    mu = base.get("mu", 1.0)
    gamma = base.get("gamma", 0.1)
    bound = delta_bound(omega, mu, gamma)
    base.setdefault("delta", bound)
    if base["delta"] < 0:
        raise ConfigError(f"delta >= 0 required, got {base['delta']}")
    if base["delta"] > bound * (1 + 1e-12):
        raise ConfigError(
            f"delta = {base['delta']} violates delta <= min(omega/16, omega mu^2/(32 gamma^2)) = {bound}"
        )
    cfg = RunConfig(**base)
    if cfg.problem not in PROBLEMS:
        raise ConfigError(f"problem must be one of {', '.join(PROBLEMS)}, got {cfg.problem!r}")
    if cfg.n < 1 or min(cfg.n_ladder) < 1:
        raise ConfigError("mesh sizes must be >= 1")
    if len(cfg.n_ladder) < 3 or any(b != 2 * a for a, b in zip(cfg.n_ladder, cfg.n_ladder[1:])):
        raise ConfigError(f"n_ladder must be >= 3 successive doublings, got {cfg.n_ladder}")
    tl = cfg.tau_ladder
    if len(tl) < 3 or any(t <= 0 for t in tl) or any(b * 2 != a for a, b in zip(tl, tl[1:])):
        raise ConfigError(f"tau_ladder must be >= 3 successive halvings, got {tl}")
    taus = tl if mode == "study-time" else (cfg.tau,)
    for t in taus:
        k = cfg.T / t
        if abs(k - round(k)) > 1e-9 * max(1.0, k):
            raise ConfigError(f"T/tau must be an integer, got T={cfg.T}, tau={t}")
    return cfg


def parse_config(argv: Sequence[str] | None = None) -> tuple[RunConfig, argparse.Namespace]:
    """Parse flags (and an optional config file) into a validated config."""
    ns = build_parser().parse_args(argv)
    raw: dict[str, str] = {}
    if ns.config:
        raw.update(read_config_file(ns.config))
    for key in _CONVERTERS:
        v = getattr(ns, key, None)
        if v is not None:
            raw[key] = v
    values = {k: _CONVERTERS[k](k, v) for k, v in raw.items()}
    return build_config(values), ns


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="oldroyd-dg",
        description="DG pressure-correction solver for the Oldroyd model of order one.",
    )
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--config", help="key = value file; flags override its entries")
    ap.add_argument("--problem", help="run mode data: mms (manufactured solution) or zero")
    ap.add_argument("--r", help="velocity degree; pressure uses r - 1")
    ap.add_argument("--n", help="cells per side of the unit square mesh")
    ap.add_argument("--n-ladder", dest="n_ladder", help="comma-separated mesh sizes")
    ap.add_argument("--tau", help="time step, e.g. 1/256")
    ap.add_argument("--tau-ladder", dest="tau_ladder", help="comma-separated time steps")
    ap.add_argument("--T", help="final time")
    ap.add_argument("--mu")
    ap.add_argument("--gamma")
    ap.add_argument("--eta")
    ap.add_argument("--delta", help="pressure-update weight (default: the stability bound)")
    ap.add_argument("--sigma-int", dest="sigma_int")
    ap.add_argument("--sigma-bnd", dest="sigma_bnd")
    ap.add_argument("--sigma-tilde", dest="sigma_tilde")
    ap.add_argument("--epsilon", help="-1 (SIPG), 0 (IIPG) or 1 (NIPG)")
    ap.add_argument("--tol", help="relative residual tolerance of linear solves")
    ap.add_argument("--out", help="CSV output path; a .txt table is written next to it")
    ap.add_argument("--seed", help="seed for randomized checks")
    return ap


# -- dispatch ------------------------------------------------------------------

def _header(cfg: RunConfig) -> list[str]:
    return ["resolved config"] + cfg.echo()


def _write_outputs(cfg: RunConfig, csv_text: str, table: str) -> None:
    print(table)
    path = Path(cfg.out or f"{cfg.mode}.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text, encoding="utf-8")
    path.with_suffix(".txt").write_text(table + "\n", encoding="utf-8")
    log.info("wrote %s", path)


def _comment_block(lines: Sequence[str]) -> str:
    return "".join(f"# {line}\n" for line in lines)


def run_single(cfg: RunConfig) -> tuple[str, str]:
    params = cfg.scheme_params()
    mesh = build_uniform_mesh(cfg.n)
    vel = DgSpace(mesh, cfg.r, 2)
    pres = DgSpace(mesh, cfg.r - 1, 1)
    scheme = PressureCorrection(vel, pres, params)
    if cfg.problem == "zero":
        state = scheme.initialize()
        state, diags = scheme.run(state)
        summary = [f"max |u_h| coefficient = {np.abs(state.u.coeffs).max():.3e}",
                   f"max |p_h| coefficient = {np.abs(state.p.coeffs).max():.3e}"]
    else:
        exact = mms.ExactSolution(params.mu, params.kernel)
        state = scheme.initialize(exact.velocity_at(0.0))
        state, diags = scheme.run(state, exact.forcing)
        e = mms.error_norms(state.u, state.p, exact, state.t, params.forms)
        summary = [f"|u_h - u| L2 = {e.u_l2:.6e}", f"|u_h - u| dG = {e.u_dg:.6e}",
                   f"|p_h - p| L2 = {e.p_l2:.6e}"]
    summary.append(f"max |mean p_h| = {max((abs(d.p_mean) for d in diags), default=0.0):.3e}")
    cols = ["step", "time", "u_l2", "u_tilde_dg", "p_mean", "momentum_residual", "momentum_iterations"]
    buf = io.StringIO()
    buf.write(_comment_block(_header(cfg)))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for d in diags:
        w.writerow([_fmt(getattr(d, c)) for c in cols])
    table = "\n".join([f"run: r={cfg.r} n={cfg.n} tau={cfg.tau!r} T={cfg.T!r} steps={len(diags)}"] + summary)
    return buf.getvalue(), table


def run_study(cfg: RunConfig) -> tuple[str, str, mms.StudyResult]:
    def progress(res: mms.MmsResult):
        log.info("n=%d tau=%.6g u_l2=%.3e p_l2=%.3e (%.1fs)", res.n, res.tau, res.errors.u_l2,
                 res.errors.p_l2, res.wall_time)

    if cfg.mode == "study-space":
        mode, ladder, fixed = "space", cfg.n_ladder, cfg.tau
    else:
        mode, ladder, fixed = "time", cfg.tau_ladder, cfg.n
    study = mms.convergence_study(mode, cfg.r, ladder, fixed, T=cfg.T, mu=cfg.mu, gamma=cfg.gamma,
                                  eta=cfg.eta, delta=cfg.delta, form_params=cfg.form_params,
                                  tol=cfg.tol, progress=progress)
    return mms.study_csv(study, _header(cfg)), mms.render_table(study), study


def run_verify(cfg: RunConfig) -> tuple[str, str, bool]:
    results = verify_forms(r=cfg.r, n=cfg.n, seed=cfg.seed, params=cfg.form_params)
    buf = io.StringIO()
    buf.write(_comment_block(_header(cfg)))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["invariant", "worst", "tolerance", "samples", "passed"])
    for res in results:
        w.writerow([res.name, _fmt(res.worst), _fmt(res.tolerance), res.samples, res.passed])
    table = "\n".join([f"form invariants: r={cfg.r} n={cfg.n} seed={cfg.seed}"] + [r.line() for r in results])
    return buf.getvalue(), table, all(r.passed for r in results)


def _fail(category: str, msg: str, code: int) -> int:
    print(f"error: {category}: {' '.join(str(msg).split())}", file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        cfg, _ = parse_config(argv)
    except (ConfigError, ParameterError) as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else 0
    try:
        if cfg.mode == "run":
            text, table = run_single(cfg)
            _write_outputs(cfg, text, table)
        elif cfg.mode == "verify-forms":
            text, table, ok = run_verify(cfg)
            _write_outputs(cfg, text, table)
            if not ok:
                raise StudyAssertionError("one or more form invariants failed")
        else:
            text, table, study = run_study(cfg)
            _write_outputs(cfg, text, table)
            if study.failed:
                raise SolverError(study.failed)
            if len(study.clean_rows) < 3:
                raise StudyAssertionError(
                    f"only {len(study.clean_rows)} rungs free of the spatial floor; need 3"
                )
    except (SolverError, StepError) as exc:
        return _fail("solver", exc, EXIT_SOLVER)
    except StudyAssertionError as exc:
        return _fail("assertion", exc, EXIT_ASSERTION)
    except (ConfigError, ParameterError) as exc:
        return _fail("config", exc, EXIT_CONFIG)
    return 0


if __name__ == "__main__":
    sys.exit(main())
