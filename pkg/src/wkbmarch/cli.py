"""Command line interface: solve, converge, validate.

Exit codes: 0 success, 2 invalid configuration, 3 numerical-validity
failure (the phase-monotonicity check), 4 oracle cross-validation or
validation-suite failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, oracle, stepper
from .coeffs import get_problem
from .errors import (
    ConfigError,
    EpsilonTooLargeError,
    OracleCrossValidationError,
    WkbError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDITY = 3
EXIT_ORACLE = 4


def _parse_complex(text: str) -> complex:
    try:
        return complex(text.replace("i", "j").replace(" ", ""))
    except ValueError:
        raise ConfigError(f"cannot parse complex number {text!r}")


def _parse_list(text: str, cast):
    try:
        return [cast(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}")


def _load_config_file(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object of option values")
    return data


def _merged(args: argparse.Namespace, keys) -> dict:
    """Config-file values first, command line flags override."""
    merged = {}
    if getattr(args, "config", None):
        file_vals = _load_config_file(args.config)
        unknown = set(file_vals) - set(keys)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        merged.update(file_vals)
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wkbmarch",
        description="Coarse-grid one-step solvers for eps^2 w'' + a(x) w = 0",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--problem", help="constant | constant(a0) | affine-squared | expr:<...>")
        p.add_argument("--phase", dest="phase_mode", help="analytic or gl:<nodes>")
        p.add_argument("--norm", choices=["max", "euclid"])
        p.add_argument("--phi0", type=_parse_complex, help="initial wave value")
        p.add_argument("--phi1", type=_parse_complex, help="initial eps * w'(0)")
        p.add_argument("--tol", dest="oracle_tol", type=float, help="oracle tolerance")
        p.add_argument("--config", help="JSON file with option values")

    ps = sub.add_parser("solve", help="single run; prints the final state")
    common(ps)
    ps.add_argument("--scheme", choices=["wkb2", "wkb3"])
    ps.add_argument("--eps", type=float)
    ps.add_argument("--n", type=int, help="number of cells")
    ps.add_argument("--oracle", action=argparse.BooleanOptionalAction, default=True,
                    help="compare against the flow reference")

    pc = sub.add_parser("converge", help="sweep (scheme, eps, N); CSV + plot script")
    common(pc)
    pc.add_argument("--schemes", help="comma list, e.g. wkb2,wkb3")
    pc.add_argument("--eps", dest="epsilons", help="comma list, e.g. 1e-2,1e-3")
    pc.add_argument("--n-list", dest="n_list", help="comma list of cell counts")
    pc.add_argument("--out", help="output directory")
    pc.add_argument("--workers", type=int)
    pc.add_argument("--cross-validate", action=argparse.BooleanOptionalAction,
                    default=None, dest="cross_validate")
    pc.add_argument("--cross-tol", dest="cross_tol", type=float)

    pv = sub.add_parser("validate", help="oracle-vs-formula suite, pass/fail table")
    pv.add_argument("--problem", default="affine-squared")
    pv.add_argument("--eps", type=float, default=0.1)
    pv.add_argument("--tol", type=float, default=1e-12)

    return parser


def _cmd_solve(args) -> int:
    keys = ["problem", "scheme", "eps", "n", "phase_mode", "norm",
            "phi0", "phi1", "oracle_tol"]
    opts = _merged(args, keys)
    problem = get_problem(opts.get("problem") or "affine-squared")
    scheme = opts.get("scheme") or "wkb3"
    eps = float(opts.get("eps") or 1e-2)
    n = int(opts.get("n") or 64)
    phase_mode = opts.get("phase_mode") or (
        "analytic" if problem.phase_antiderivative is not None else "gl:6")
    phi0 = opts.get("phi0", 1.0 + 0.0j)
    phi1 = opts.get("phi1", 1.0j)
    if phase_mode == "analytic" and problem.phase_antiderivative is None:
        raise ConfigError(f"problem {problem.name!r} has no closed-form phase; use gl:<n>")

    traj = stepper.solve_ivp(problem.model, eps, n, scheme, phi0, phi1,
                             phase_mode, problem.phase_antiderivative)
    print(f"problem {problem.name}  scheme {traj.scheme}  eps {eps:g}  N {n}  "
          f"phase {phase_mode}")
    print(f"U(1)      = [{traj.u[-1, 0]:.12e}, {traj.u[-1, 1]:.12e}]")
    print(f"w(1)      = {traj.w[-1]:.12e}")
    print(f"eps w'(1) = {traj.eps_w_prime[-1]:.12e}")
    if args.oracle:
        tol = float(opts.get("oracle_tol") or 1e-13)
        norm = opts.get("norm") or "max"
        ref = oracle.reference_solution(problem, eps, traj.grid, tol=tol,
                                        phi0=phi0, phi1=phi1)
        err_u = harness.state_error(traj.u, ref.u, norm)
        err_z = harness.state_error(traj.z, ref.z, norm)
        print(f"err_U_Linf = {err_u:.6e}")
        print(f"err_Z_Linf = {err_z:.6e}")
    return EXIT_OK


def _cmd_converge(args) -> int:
    keys = ["problem", "schemes", "epsilons", "n_list", "phase_mode", "norm",
            "phi0", "phi1", "oracle_tol", "out", "workers", "cross_validate",
            "cross_tol"]
    opts = _merged(args, keys)
    if isinstance(opts.get("schemes"), str):
        opts["schemes"] = _parse_list(opts["schemes"], str)
    if isinstance(opts.get("epsilons"), str):
        opts["epsilons"] = _parse_list(opts["epsilons"], float)
    if isinstance(opts.get("n_list"), str):
        opts["n_list"] = _parse_list(opts["n_list"], int)
    config = harness.StudyConfig(**{k: v for k, v in opts.items() if v is not None})
    records = harness.run_study(config)

    print(f"{'scheme':<6} {'eps':>8} {'N':>6} {'err_U':>12} {'err_Z':>12} {'order':>7}")
    for r in records:
        order = f"{r.observed_order:7.2f}" if r.observed_order is not None else "      -"
        print(f"{r.scheme:<6} {r.epsilon:>8.0e} {r.n_cells:>6d} "
              f"{r.err_U_Linf:>12.3e} {r.err_Z_Linf:>12.3e} {order}")
    for scheme in config.schemes:
        for eps in config.epsilons:
            group = [r for r in records if r.scheme == scheme and r.epsilon == eps]
            try:
                slope = harness.estimate_order(group, error="u")
                print(f"fit {scheme} eps={eps:g}: order {slope:.2f}")
            except WkbError as exc:
                print(f"fit {scheme} eps={eps:g}: {exc}")
    if config.out:
        paths = harness.emit_outputs(records, config.out)
        for p in paths:
            print(f"wrote {p}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    rows = harness.run_validation(args.problem, args.eps, args.tol)
    width = max(len(r.name) for r in rows)
    failures = 0
    for r in rows:
        status = "PASS" if r.passed else "FAIL"
        failures += 0 if r.passed else 1
        print(f"{status}  {r.name:<{width}}  {r.detail}")
    print(f"{len(rows) - failures}/{len(rows)} checks passed")
    return EXIT_OK if failures == 0 else EXIT_ORACLE


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "converge":
            return _cmd_converge(args)
        return _cmd_validate(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EpsilonTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDITY
    except OracleCrossValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except WkbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
