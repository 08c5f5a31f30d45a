"""Study driver: sweeps, error norms, order fits, and output artifacts.

A study runs each (scheme, eps, N) combination against one oracle reference
per eps (computed on the finest grid and restricted to the coarser nested
grids), then reports per-run errors, pairwise observed orders, and
least-squares order fits.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import oracle as _oracle
from . import stepper as _stepper
from .coeffs import get_problem
from .errors import ConfigError, InsufficientDataError
from .phase import parse_phase_mode

__all__ = [
    "StudyConfig",
    "ConvergenceRecord",
    "run_study",
    "estimate_order",
    "emit_outputs",
    "run_validation",
    "ValidationRow",
    "state_error",
]

CSV_HEADER = ["scheme", "epsilon", "h", "err_U_Linf", "err_Z_Linf",
              "wall_time_s", "observed_order"]

_NORMS = {
    "max": lambda d: np.max(np.abs(d), axis=1),
    "euclid": lambda d: np.sqrt(np.sum(np.abs(d) ** 2, axis=1)),
}


@dataclass(frozen=True)
class StudyConfig:
    """Sweep definition; defaults reproduce the standard convergence study."""

    problem: str = "affine-squared"
    schemes: Sequence[str] = ("wkb3", "wkb2")
    epsilons: Sequence[float] = (1e-2, 1e-3, 1e-4)
    n_list: Sequence[int] = (16, 32, 64, 128, 256, 512)
    phase_mode: str = "analytic"
    phi0: complex = 1.0 + 0.0j
    phi1: complex = 1.0j
    norm: str = "max"
    out: Optional[str] = None
    oracle_tol: float = 1e-13
    cross_validate: bool = True
    cross_tol: float = 1e-8
    workers: Optional[int] = None

    def validated(self) -> "StudyConfig":
        schemes = tuple(_stepper.normalize_scheme(s) for s in self.schemes)
        if not schemes:
            raise ConfigError("scheme list is empty")
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(e <= 0 or e > 1 for e in eps):
            raise ConfigError(f"epsilons must lie in (0, 1], got {self.epsilons}")
        ns = tuple(int(n) for n in self.n_list)
        if not ns or any(n < 2 for n in ns):
            raise ConfigError(f"N values must be >= 2, got {self.n_list}")
        if sorted(ns) != list(ns) or len(set(ns)) != len(ns):
            raise ConfigError("N list must be strictly increasing")
        n_max = ns[-1]
        bad = [n for n in ns if n_max % n != 0]
        if bad:
            raise ConfigError(
                f"N list is not nested: {bad} do not divide the finest N={n_max}"
            )
        if self.norm not in _NORMS:
            raise ConfigError(f"unknown norm {self.norm!r}; choose max or euclid")
        parse_phase_mode(self.phase_mode)
        return replace(self, schemes=schemes, epsilons=eps, n_list=ns)


@dataclass(frozen=True)
class ConvergenceRecord:
    scheme: str
    epsilon: float
    h: float
    err_U_Linf: float
    err_Z_Linf: float
    wall_time_s: float
    observed_order: Optional[float] = None
    n_cells: int = 0


def state_error(a: np.ndarray, b: np.ndarray, norm: str = "max") -> float:
    """L-inf over nodes of the chosen vector norm on C^2."""
    if norm not in _NORMS:
        raise ConfigError(f"unknown norm {norm!r}; choose max or euclid")
    return float(np.max(_NORMS[norm](a - b)))


def run_study(config: StudyConfig) -> list[ConvergenceRecord]:
    """Run the sweep; one record per (scheme, eps, N), canonically sorted."""
    config = config.validated()
    problem = get_problem(config.problem)
    mode = parse_phase_mode(config.phase_mode)
    if mode.kind == "analytic" and problem.phase_antiderivative is None:
        raise ConfigError(
            f"problem {problem.name!r} has no closed-form phase; use gl:<n>"
        )
    n_max = config.n_list[-1]

    refs = {}
    for eps in config.epsilons:
        refs[eps] = _oracle.reference_solution(
            problem, eps, np.linspace(0.0, 1.0, n_max + 1),
            tol=config.oracle_tol, phi0=config.phi0, phi1=config.phi1,
            cross_validate=config.cross_validate, cross_tol=config.cross_tol,
        )

    def one(scheme, eps, n):
        t0 = time.perf_counter()
        traj = _stepper.solve_ivp(
            problem.model, eps, n, scheme, config.phi0, config.phi1,
            phase_mode=mode, antiderivative=problem.phase_antiderivative,
            keep_operators=False,
        )
        wall = time.perf_counter() - t0
        stride = n_max // n
        ref = refs[eps]
        return ConvergenceRecord(
            scheme=scheme, epsilon=eps, h=1.0 / n,
            err_U_Linf=state_error(traj.u, ref.u[::stride], config.norm),
            err_Z_Linf=state_error(traj.z, ref.z[::stride], config.norm),
            wall_time_s=wall, n_cells=n,
        )

    jobs = [(s, e, n) for s in config.schemes for e in config.epsilons
            for n in config.n_list]
    workers = config.workers or min(4, len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: one(*j), jobs))
    else:
        results = [one(*j) for j in jobs]

    results.sort(key=lambda r: (r.scheme, -r.epsilon, -r.h))
    out = []
    prev = None
    for rec in results:
        order = None
        if prev is not None and prev.scheme == rec.scheme and prev.epsilon == rec.epsilon:
            if rec.err_U_Linf > 0 and prev.err_U_Linf > 0:
                order = math.log(prev.err_U_Linf / rec.err_U_Linf) / math.log(prev.h / rec.h)
        out.append(replace(rec, observed_order=order))
        prev = rec
    return out


def estimate_order(
    records: Sequence[ConvergenceRecord],
    error: str = "u",
    window: tuple[float, float] = (1e-12, 1e-2),
) -> float:
    """Least-squares slope of log err vs log h for one (scheme, eps) group.

    Points with errors outside ``window`` (round-off floor, pre-asymptotic
    blowups) are excluded; at least 3 usable points are required.
    """
    if error not in ("u", "z"):
        raise ConfigError("error must be 'u' or 'z'")
    groups = {(r.scheme, r.epsilon) for r in records}
    if len(groups) != 1:
        raise ConfigError(f"records span several groups: {sorted(groups)}")
    pts = []
    for r in records:
        err = r.err_U_Linf if error == "u" else r.err_Z_Linf
        if window[0] < err < window[1]:
            pts.append((math.log(r.h), math.log(err)))
    if len(pts) < 3:
        raise InsufficientDataError(
            f"only {len(pts)} usable points in error window {window}; need >= 3"
        )
    x, y = zip(*pts)
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# Output artifacts
# ---------------------------------------------------------------------------


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.12e}"


def emit_outputs(records: Sequence[ConvergenceRecord], path) -> list[Path]:
    """Write convergence.csv and plot_convergence.py under ``path``."""
    outdir = Path(path)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "convergence.csv"
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL)
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([
            r.scheme, _fmt(r.epsilon), _fmt(r.h), _fmt(r.err_U_Linf),
            _fmt(r.err_Z_Linf), _fmt(r.wall_time_s), _fmt(r.observed_order),
        ])
    csv_path.write_text(buf.getvalue(), encoding="utf-8")
    plot_path = outdir / "plot_convergence.py"
    plot_path.write_text(_PLOT_TEMPLATE, encoding="utf-8")
    return [csv_path, plot_path]


_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Log-log error-vs-h panels from convergence.csv (one panel per scheme)."""

import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

csv_path = Path(__file__).with_name("convergence.csv")
rows = list(csv.DictReader(csv_path.open()))
schemes = ["wkb3", "wkb2"]
fig, axes = plt.subplots(1, 2, figsize=(11, 4.5), sharey=True)
for ax, scheme in zip(axes, schemes):
    curves = defaultdict(list)
    for row in rows:
        if row["scheme"] == scheme:
            curves[float(row["epsilon"])].append(
                (float(row["h"]), float(row["err_U_Linf"])))
    for eps in sorted(curves, reverse=True):
        pts = sorted(curves[eps], reverse=True)
        hs = [p[0] for p in pts]
        errs = [p[1] for p in pts]
        ax.loglog(hs, errs, "o-", label=f"eps = {eps:g}")
    ax.axhline(1e-13, color="grey", ls="--", lw=0.8, label="round-off ~1e-13")
    ax.set_title(scheme.upper())
    ax.set_xlabel("step size h")
    ax.grid(True, which="both", alpha=0.3)
    ax.invert_xaxis()
axes[0].set_ylabel("L-inf error of U")
axes[0].legend(fontsize=8)
fig.tight_layout()
out = Path(__file__).with_name("convergence.png")
fig.savefig(out, dpi=150)
print(f"wrote {out}")
if "--show" in sys.argv:
    plt.show()
'''


# ---------------------------------------------------------------------------
# Validation suite (formula-vs-oracle battery behind the `validate` command)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationRow:
    name: str
    passed: bool
    detail: str


def _slope(hs, errs) -> float:
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def run_validation(problem_name: str = "affine-squared", eps: float = 0.1,
                   tol: float = 1e-12) -> list[ValidationRow]:
    """Formula-vs-oracle battery; every row must pass on a healthy build."""
    from . import coeffs as _coeffs
    from . import transform as _transform

    rows = []
    problem = get_problem(problem_name)
    model = problem.model
    rng = np.random.default_rng(20240817)

    # transform round trips
    worst = 0.0
    for _ in range(200):
        u = _transform.StateVec(rng.normal(size=2) + 1j * rng.normal(size=2), "U")
        phi = float(rng.uniform(0.0, 3.0))
        back = _transform.u_from_z(_transform.z_from_u(u, phi, eps), phi, eps)
        worst = max(worst, float(np.max(np.abs(back.vec - u.vec)) / np.max(np.abs(u.vec))))
    rows.append(ValidationRow("U->Z->U round trip", worst < 1e-14,
                              f"max rel deviation {worst:.2e}"))

    pp = _transform.P_MATRIX @ _transform.P_INV
    dev = float(np.max(np.abs(pp - np.eye(2))))
    rows.append(ValidationRow("P * P^-1 = I", dev < 5e-16, f"max entry dev {dev:.2e}"))

    # chain identities d0 = c0/(2 phi'), f0 = b0/(2 phi'), g0 = b1/(2 phi')
    xs = rng.uniform(0.0, 1.0, size=200)
    vals = _coeffs.chain_nodes(model, eps, xs, 5, with_aux=True)
    den = 2.0 * vals.phi_prime
    checks = [
        np.abs(vals.aux["d0"] * den - vals.aux["c0"]),
        np.abs(vals.aux["f0"] * den - vals.chain[0]),
        np.abs(vals.aux["g0"] * den - vals.chain[1]),
    ]
    scale = np.abs(vals.aux["c0"]) + np.abs(vals.chain[0]) + np.abs(vals.chain[1]) + 1e-30
    worst = float(np.max(np.concatenate(checks) / np.concatenate([scale] * 3)))
    rows.append(ValidationRow("auxiliary chain identities", worst < 1e-14,
                              f"max rel deviation {worst:.2e}"))

    # constant coefficient: everything vanishes exactly
    cmodel = _coeffs.ConstantModel(4.0)
    cv = _coeffs.chain_nodes(cmodel, eps, np.linspace(0, 1, 11), 5, with_aux=True)
    exact_zero = (np.all(cv.b == 0.0) and np.all(cv.chain == 0.0)
                  and all(np.all(v == 0.0) for v in cv.aux.values()))
    rows.append(ValidationRow("constant-coefficient annihilation", exact_zero,
                              "b and all derived coefficients exactly zero"))

    # h_p remainder bound and recurrence
    xs = np.concatenate([-np.logspace(-12, 3, 40), np.logspace(-12, 3, 40)])
    ok_bound = True
    ok_rec = True
    for p in (1, 2, 3):
        hp = _stepper.h_special(p, xs)
        bound = np.abs(xs) ** p / math.factorial(p)
        ok_bound &= bool(np.all(np.abs(hp) <= bound * (1 + 1e-12) + 1e-300))
        if p < 3:
            nxt = _stepper.h_special(p + 1, xs)
            term = (1j * xs) ** p / math.factorial(p)
            ok_rec &= bool(np.max(np.abs(nxt - (hp - term))) < 1e-12 * np.max(np.abs(hp) + 1))
    rows.append(ValidationRow("h_p bound |h_p| <= |x|^p/p!", ok_bound, "log-spaced sweep"))
    rows.append(ValidationRow("h_p recurrence", ok_rec, "h_{p+1} = h_p - (ix)^p/p!"))

    # phase: analytic vs quadrature, additivity
    if problem.phase_antiderivative is not None:
        from . import phase as _phase
        ta = _phase.build_phase_table(model, eps, 64, "analytic", problem.phase_antiderivative)
        tq = _phase.build_phase_table(model, eps, 64, "gl:6")
        dev = float(np.max(np.abs(ta.phi - tq.phi)))
        rows.append(ValidationRow("phase analytic vs gl:6", dev < 1e-13,
                                  f"max node deviation {dev:.2e}"))

    # picard strategies agree
    phase_fn = _oracle.make_phase_fn(model, eps, problem.phase_antiderivative)
    worst = 0.0
    for p in (1, 2, 3):
        ms = _oracle.picard_m(p, 0.0, 0.25, model, eps, 1e-12, "spectral", phase_fn=phase_fn)
        mo = _oracle.picard_m(p, 0.0, 0.25, model, eps, 1e-12, "ode", phase_fn=phase_fn)
        worst = max(worst, float(np.max(np.abs(ms - mo))))
    rows.append(ValidationRow("picard spectral vs ode", worst < 1e-10,
                              f"max deviation {worst:.2e}"))

    # scheme blocks against the iterated integrals
    hs = [2.0 ** -k for k in range(3, 7)]
    block_errs = {1: [], 2: [], 3: []}
    op_errs = []
    for h in hs:
        s = float(phase_fn.phi(np.array([h]))[0])
        ctx = _stepper.make_step_context(model, eps, 0.0, h, "wkb3", s=s, phi_lo=0.0)
        op = _stepper.assemble_step_operator(ctx)
        blocks = {1: op.a1, 2: op.a2, 3: op.a3}
        for p in (1, 2, 3):
            mp = _oracle.picard_m(p, 0.0, h, model, eps, 1e-13, phase_fn=phase_fn)
            block_errs[p].append(float(np.max(np.abs(blocks[p] - eps ** p * mp))))
        T = _oracle.transfer_matrix(model, eps, 0.0, h, 1e-14, phase_fn=phase_fn)
        op_errs.append(float(np.max(np.abs(op.matrix - T))))
    slopes = {p: _slope(hs, block_errs[p]) for p in (1, 2, 3)}
    ok = all(s >= 2.0 for s in slopes.values())
    rows.append(ValidationRow("A^p vs eps^p M_p slopes >= 2", ok,
                              " ".join(f"p{p}:{s:.2f}" for p, s in slopes.items())))
    sl_op = _slope(hs, op_errs)
    rows.append(ValidationRow("operator vs flow slope", sl_op >= 3.0,
                              f"slope {sl_op:.2f} (residuals {op_errs[0]:.1e}->{op_errs[-1]:.1e})"))

    # flow conservation |Z1|^2 - |Z2|^2
    z0 = _transform.StateVec(np.array([0.8 + 0.1j, -0.3 + 0.4j]), "Z")
    z1 = _oracle.flow_oracle(z0, 0.0, 1.0, model, eps, tol, phase_fn=phase_fn)
    inv0 = abs(z0.vec[0]) ** 2 - abs(z0.vec[1]) ** 2
    inv1 = abs(z1.vec[0]) ** 2 - abs(z1.vec[1]) ** 2
    dev = abs(inv0 - inv1)
    rows.append(ValidationRow("flow invariant |Z1|^2-|Z2|^2", dev <= 10 * tol,
                              f"drift {dev:.2e}"))

    # end-to-end exactness on a constant problem
    cprob = get_problem("constant")
    traj = _stepper.solve_ivp(cprob.model, 1e-2, 16, "wkb3", 1.0, 1j,
                              "analytic", cprob.phase_antiderivative)
    err = float(np.max(np.abs(traj.w - np.exp(1j * traj.grid / 1e-2))))
    rows.append(ValidationRow("constant problem exactness", err < 1e-13,
                              f"wave error {err:.2e}"))

    return rows
