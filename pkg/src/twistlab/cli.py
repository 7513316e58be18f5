"""Command-line front end: single evaluations, sweeps, and verification suites.

Outputs are CSV (default) or JSON.  CSV carries `#`-prefixed header comments
(the timestamp line is the only non-reproducible byte); JSON mirrors the rows
under "records" with a "meta" object.  Row-level parallelism is controlled by
--threads / TWISTLAB_THREADS; rows are always emitted in index order.

Exit codes: 0 ok, 2 configuration error, 3 numerical-verification failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import lattice_fr as lat
from . import oat_metrology as oat
from .numerics import IndeterminateRatioError
from .optimizer import maximize_on_sphere
from .spin_core import Direction, X_AXIS, Y_AXIS, Z_AXIS, coherent_state, husimi_q, oat_evolve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3


class ConfigError(ValueError):
    """A run configuration violates a module precondition."""


_NAMED_AXES = {"x": X_AXIS, "y": Y_AXIS, "z": Z_AXIS}

_VARIANT_ALIASES = {
    "rotation-only": "rotation_only",
    "twist-untwist": "twist_untwist",
    "realigned": "twist_untwist_realigned",
    "mach-zehnder": "mach_zehnder",
}


def _parse_axis(text: str) -> Direction:
    """'x' / 'y' / 'z' or 'xi,theta' in radians."""
    if text.lower() in _NAMED_AXES:
        return _NAMED_AXES[text.lower()]
    try:
        xi, theta = (float(p) for p in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"axis must be x, y, z or 'xi,theta', got {text!r}") from exc
    return Direction.from_angles(xi, theta)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _emit(args, columns: list[str], rows: list[dict], meta: dict) -> None:
    meta = {"tool": "twistlab", "version": __version__, **meta}
    if args.format == "json":
        payload = {"meta": meta, "records": rows}
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    else:
        lines = [f"# generated {datetime.now(timezone.utc).isoformat()}"]
        lines.append("# " + json.dumps(meta, sort_keys=True))
        lines.append(",".join(columns))
        for row in rows:
            lines.append(",".join(_fmt(row.get(c)) for c in columns))
        text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("TWISTLAB_THREADS", "")
    return max(1, int(env)) if env.isdigit() and env else 1


def _pmap(fn, items, threads: int) -> list:
    """Map preserving order; rows may be computed out of order across threads."""
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _meta(args, **extra) -> dict:
    skip = {"output", "format", "func"}
    config = {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}
    return {"config": config, **extra}


# ---------------------------------------------------------------------------
# subcommands


def cmd_qfi(args) -> int:
    if args.n < 1:
        raise ConfigError("--n must be at least 1")
    direction = _parse_axis(args.direction)
    xi, theta = direction.xi, direction.theta
    closed = oat.qfi_closed_form(args.n, args.t, xi, theta)
    numeric = oat.qfi_numeric(args.n, args.t, direction)
    rel = abs(closed - numeric) / max(abs(numeric), 1e-300)
    rows = [{"N": args.n, "t": args.t, "xi": xi, "theta": theta,
             "qfi_closed": closed, "qfi_numeric": numeric, "rel_diff": rel}]
    _emit(args, ["N", "t", "xi", "theta", "qfi_closed", "qfi_numeric", "rel_diff"], rows,
          _meta(args))
    return EXIT_OK


def cmd_mom(args) -> int:
    if args.n < 1:
        raise ConfigError("--n must be at least 1")
    variant = _VARIANT_ALIASES.get(args.variant, args.variant)
    rotation = _parse_axis(args.rot)
    readout = _parse_axis(args.readout)
    spec = oat.ProtocolSpec(args.n, args.t, args.phi, rotation, variant=variant,
                            realign_angle=args.realign_phi, mz_axis=args.mz_axis)
    flag = "ok"
    try:
        value = oat.mom_reciprocal_error(spec, readout)
    except IndeterminateRatioError:
        value, flag = None, "indeterminate"
    qfi = oat.qfi_numeric(args.n, args.t, rotation)
    rows = [{"N": args.n, "t": args.t, "phi": args.phi,
             "n_x": rotation.nx, "n_y": rotation.ny, "n_z": rotation.nz,
             "m_x": readout.nx, "m_y": readout.ny, "m_z": readout.nz,
             "reciprocal_error": value, "qfi": qfi, "flag": flag}]
    _emit(args, ["N", "t", "phi", "n_x", "n_y", "n_z", "m_x", "m_y", "m_z",
                 "reciprocal_error", "qfi", "flag"], rows, _meta(args))
    return EXIT_OK


def cmd_phase_diagram(args) -> int:
    if args.n < 2:
        raise ConfigError("--n must be at least 2")
    if args.q_points < 2:
        raise ConfigError("--q-points must be at least 2")
    q_max_default = math.log(math.pi / 2) / math.log(args.n)
    q_lo = args.q_min if args.q_min is not None else -2.5
    q_hi = args.q_max if args.q_max is not None else q_max_default
    grid = np.linspace(q_lo, q_hi, args.q_points)

    def work(q: float) -> dict:
        rec = oat.phase_diagram_scan(args.n, [q])[0]
        return {"N": rec.n_particles, "q": rec.q, "t": rec.t, "qfi_max": rec.qfi_max,
                "xi_opt": rec.argmax_xi, "theta_opt": rec.argmax_theta, "regime": rec.regime}

    rows = _pmap(work, [float(q) for q in grid], _threads(args))
    _emit(args, ["N", "q", "t", "qfi_max", "xi_opt", "theta_opt", "regime"], rows,
          _meta(args))
    return EXIT_OK


def _optimized_readout(spec: oat.ProtocolSpec) -> float:
    """Best reciprocal error over the readout sphere, seeded near the coordinate axes."""
    def objective(m_dir: Direction) -> float:
        try:
            return oat.mom_reciprocal_error(spec, m_dir)
        except IndeterminateRatioError:
            return -math.inf
    res = maximize_on_sphere(objective, extra_seeds=((math.pi / 2, -math.pi / 2), (1e-4, 0.0)),
                             maxiter=600)
    return res.value


def cmd_twist_untwist_scan(args) -> int:
    if args.n_min < 4 or args.n_max < args.n_min or args.n_step < 1:
        raise ConfigError("need 4 <= n-min <= n-max and a positive n-step")
    rotation = _parse_axis(args.rot)
    n_values = list(range(args.n_min, args.n_max + 1, args.n_step))

    def work(n: int) -> dict:
        t = float(n) ** args.exponent
        spec = oat.ProtocolSpec(n, t, args.phi, rotation)
        best = oat.max_qfi_over_directions(n, t)
        row = {"N": n, "t": t, "phi": args.phi, "rot": args.rot, "qfi_max": best.value,
               "flag": "ok" if best.converged else "optimizer_not_converged"}
        row["mom_opt"] = _optimized_readout(spec)
        for label, readout in (("mom_fixed_rot", rotation), ("mom_fixed_x", X_AXIS)):
            try:
                row[label] = oat.mom_reciprocal_error(spec, readout)
            except IndeterminateRatioError:
                row[label] = None
                row["flag"] = "indeterminate"
        try:
            row["mom_at_zero"] = oat.mom_reciprocal_at_zero(spec, rotation)
        except (IndeterminateRatioError, ArithmeticError):
            row["mom_at_zero"] = None
        return row

    rows = _pmap(work, n_values, _threads(args))
    _emit(args, ["N", "t", "phi", "rot", "qfi_max", "mom_opt", "mom_fixed_rot",
                 "mom_fixed_x", "mom_at_zero", "flag"], rows,
          _meta(args))
    return EXIT_OK


def _check_lattice_args(n: int, k: int) -> None:
    if n < 2 or n % 2:
        raise ConfigError("--n must be even and at least 2 (the ring has n+2 sites)")
    if not 1 <= k <= n // 2:
        raise ConfigError(f"--k must satisfy 1 <= k <= n/2 = {n // 2}")


def cmd_fr_variance(args) -> int:
    _check_lattice_args(args.n, args.k)
    rows = []
    var = lat.fr_variance_analytic(args.n, args.k, args.t, args.xi, args.theta, branch=args.branch)
    row = {"N": args.n, "K": args.k, "t": args.t, "xi": args.xi, "theta": args.theta,
           "branch": args.branch, "var_analytic": var, "var_brute": None, "rel_err": None}
    if args.brute:
        if args.n + 2 > lat.BRUTE_FORCE_MAX_SITES:
            raise ConfigError(f"brute force capped at {lat.BRUTE_FORCE_MAX_SITES} sites")
        system = lat.build_system(args.n, args.k)
        state = lat.fr_evolve(lat.plus_state(system.n_sites), system, args.t)
        brute = lat.lattice_variance(state, Direction.from_angles(args.xi, args.theta))
        row["var_brute"] = brute
        row["rel_err"] = abs(var - brute) / max(abs(brute), 1e-300)
    rows.append(row)
    _emit(args, ["N", "K", "t", "xi", "theta", "branch", "var_analytic", "var_brute", "rel_err"],
          rows, _meta(args))
    return EXIT_OK


def cmd_fr_qfi(args) -> int:
    _check_lattice_args(args.n, args.k)
    if args.t_points < 1:
        raise ConfigError("--t-points must be positive")
    ts = np.linspace(args.t_min, args.t_max, args.t_points)
    if np.any(ts <= 0) or np.any(ts > math.pi / 2 + 1e-12):
        raise ConfigError("interaction times must lie in (0, pi/2]")

    def work(t: float) -> dict:
        best = lat.fr_max_qfi(args.n, args.k, t, branch=args.branch)
        qfi = best.value
        return {"N": args.n, "K": args.k, "t": t, "branch": args.branch,
                "var_max": qfi / 4.0, "qfi": qfi,
                "qfi_db": lat.qfi_decibels(qfi, args.n + 2),
                "overlay_inter": lat.fr_interpolation_forms("inter1", args.n, t=t),
                "overlay_largescale": lat.fr_interpolation_forms("largescale", args.n, t=t)}

    rows = _pmap(work, [float(t) for t in ts], _threads(args))
    _emit(args, ["N", "K", "t", "branch", "var_max", "qfi", "qfi_db",
                 "overlay_inter", "overlay_largescale"], rows,
          _meta(args))
    return EXIT_OK


def cmd_fr_optimize(args) -> int:
    _check_lattice_args(args.n, args.k)
    if args.n + 2 > lat.BRUTE_FORCE_MAX_SITES:
        raise ConfigError(f"brute force capped at {lat.BRUTE_FORCE_MAX_SITES} sites")
    if args.phi == 0.0:
        raise ConfigError("--phi must be nonzero (the phi = 0 point is 0/0)")
    system = lat.build_system(args.n, args.k)
    ts = [(j + 1) * (math.pi / 2) / args.t_points for j in range(args.t_points)]
    rows = []
    seeds: tuple = ()
    for t in ts:
        res = lat.fr_optimal_protocol(args.n, args.k, t, args.phi, system=system,
                                      extra_seeds=seeds, restarts=3, maxiter=args.maxiter)
        seeds = ((res.rotation.xi, res.rotation.theta, res.readout.xi, res.readout.theta),)
        qfi = lat.fr_max_qfi(args.n, args.k, t).value
        rows.append({"N": args.n, "K": args.k, "t": t, "phi": args.phi,
                     "mom_opt": res.value, "qfi": qfi,
                     "n_x": res.rotation.nx, "n_y": res.rotation.ny, "n_z": res.rotation.nz,
                     "m_x": res.readout.nx, "m_y": res.readout.ny, "m_z": res.readout.nz,
                     "flag": "ok" if res.converged else "optimizer_not_converged"})
    _emit(args, ["N", "K", "t", "phi", "mom_opt", "qfi", "n_x", "n_y", "n_z",
                 "m_x", "m_y", "m_z", "flag"], rows, _meta(args))
    return EXIT_OK


def cmd_husimi(args) -> int:
    if args.n < 1:
        raise ConfigError("--n must be at least 1")
    state = oat_evolve(coherent_state(args.n, 1.0), args.t)
    xi = np.linspace(0.0, math.pi, args.xi_points)
    theta = np.linspace(-math.pi, math.pi, args.theta_points)
    q = husimi_q(state, xi[:, None], theta[None, :])
    if args.density:
        q = q * (args.n + 1) / (4.0 * math.pi)
    rows = [{"xi": float(x), "theta": float(th), "q": float(q[i, j])}
            for i, x in enumerate(xi) for j, th in enumerate(theta)]
    _emit(args, ["xi", "theta", "q"], rows,
          _meta(args))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _suite_closed_form(draws: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        n = int(rng.integers(2, 51))
        t = float(rng.uniform(1e-6, math.pi / 2))
        xi = float(rng.uniform(0.0, math.pi))
        theta = float(rng.uniform(-math.pi, math.pi))
        closed = oat.qfi_closed_form(n, t, xi, theta)
        numeric = oat.qfi_numeric(n, t, Direction.from_angles(xi, theta))
        worst = max(worst, abs(closed - numeric) / max(abs(numeric), 1e-300))
    return {"suite": "closed-form", "check": "qfi closed form vs state-side variance",
            "cases": draws, "max_error": worst, "tolerance": 1e-9,
            "status": "pass" if worst < 1e-9 else "fail"}


def _suite_appendix_c(sites: int, seed: int) -> dict:
    if sites % 2 or sites < 4 or sites > lat.BRUTE_FORCE_MAX_SITES:
        raise ConfigError(f"--sites must be even, between 4 and {lat.BRUTE_FORCE_MAX_SITES}")
    rng = np.random.default_rng(seed)
    n = sites - 2
    worst = 0.0
    cases = 0
    for k in range(1, n // 2 + 1):
        system = lat.build_system(n, k)
        for _ in range(10):
            t = float(rng.uniform(1e-3, math.pi / 2))
            xi = float(rng.uniform(0.1, math.pi - 0.1))
            theta = float(rng.uniform(-math.pi, math.pi))
            state = lat.fr_evolve(lat.plus_state(sites), system, t)
            brute = lat.lattice_variance(state, Direction.from_angles(xi, theta))
            analytic = lat.fr_variance_analytic(n, k, t, xi, theta)
            worst = max(worst, abs(analytic - brute) / max(abs(brute), 1e-300))
            cases += 1
    return {"suite": "appendix-c", "check": "analytic ring variance vs statevector",
            "cases": cases, "max_error": worst, "tolerance": 1e-9,
            "status": "pass" if worst < 1e-9 else "fail"}


def _suite_ghz(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    worst = 0.0
    cases = 0
    for n in (2, 4, 6, 10):
        for _ in range(10):
            phi = float(rng.uniform(0.05, math.pi / 2))
            err = oat.ghz_parity_error(n, phi)
            worst = max(worst, abs(err - 1.0 / n**2))
            cases += 1
    return {"suite": "ghz", "check": "parity-readout error equals 1/N^2",
            "cases": cases, "max_error": worst, "tolerance": 1e-12,
            "status": "pass" if worst < 1e-12 else "fail"}


def _suite_qcri(draws: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    worst = -math.inf
    cases = 0
    variants = ("rotation_only", "twist_untwist", "twist_untwist_realigned")
    while cases < draws:
        n = int(rng.integers(2, 41))
        t = float(rng.uniform(0.0, math.pi / 2))
        phi = float(rng.uniform(0.02, 1.0))
        rotation = Direction.from_angles(rng.uniform(0, math.pi), rng.uniform(-math.pi, math.pi))
        readout = Direction.from_angles(rng.uniform(0, math.pi), rng.uniform(-math.pi, math.pi))
        variant = variants[int(rng.integers(0, len(variants)))]
        spec = oat.ProtocolSpec(n, t, phi, rotation, variant=variant,
                                realign_angle=float(rng.uniform(-0.5, 0.5)))
        try:
            mom = oat.mom_reciprocal_error(spec, readout)
        except IndeterminateRatioError:
            continue
        qfi = oat.qfi_numeric(n, t, rotation)
        worst = max(worst, mom - qfi)
        cases += 1
    return {"suite": "qcri", "check": "reciprocal error never beats the QFI",
            "cases": cases, "max_error": worst, "tolerance": 1e-6,
            "status": "pass" if worst <= 1e-6 else "fail"}


def cmd_verify(args) -> int:
    rows = []
    suites = ("closed-form", "appendix-c", "ghz", "qcri") if args.suite == "all" else (args.suite,)
    for suite in suites:
        if suite == "closed-form":
            rows.append(_suite_closed_form(args.draws, args.seed))
        elif suite == "appendix-c":
            rows.append(_suite_appendix_c(args.sites, args.seed))
        elif suite == "ghz":
            rows.append(_suite_ghz(args.seed))
        elif suite == "qcri":
            rows.append(_suite_qcri(args.draws, args.seed))
        else:
            raise ConfigError(f"unknown suite {suite!r}")
    _emit(args, ["suite", "check", "cases", "max_error", "tolerance", "status"], rows,
          _meta(args))
    failed = [r for r in rows if r["status"] != "pass"]
    for r in failed:
        print(f"verification failure: {r['suite']}: max_error {r['max_error']:.3e} "
              f"exceeds {r['tolerance']:g}", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twistlab",
        description="One-axis-twisting spin metrology: QFI, twist-untwist protocols, "
                    "finite-range Ising rings. Angles are radians throughout.")
    parser.add_argument("--version", action="version", version=f"twistlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--output", help="write to this path instead of stdout")
        p.add_argument("--threads", type=int, default=None,
                       help="row-level parallelism (default: TWISTLAB_THREADS or 1)")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized suites")

    p = sub.add_parser("qfi", help="closed-form and numeric QFI at one parameter point")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--direction", default="x", help="x|y|z or 'xi,theta'")
    common(p)
    p.set_defaults(func=cmd_qfi)

    p = sub.add_parser("mom", help="method-of-moments reciprocal error for one protocol")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--variant", default="twist-untwist",
                   choices=sorted(set(_VARIANT_ALIASES) | set(_VARIANT_ALIASES.values())))
    p.add_argument("--rot", default="x", help="rotation axis: x|y|z or 'xi,theta'")
    p.add_argument("--readout", default="x", help="readout axis: x|y|z or 'xi,theta'")
    p.add_argument("--realign-phi", type=float, default=0.0)
    p.add_argument("--mz-axis", choices=("x", "y"), default="y")
    common(p)
    p.set_defaults(func=cmd_mom)

    p = sub.add_parser("phase-diagram", help="direction-maximized QFI vs t = N^q")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--q-min", type=float, default=None)
    p.add_argument("--q-max", type=float, default=None)
    p.add_argument("--q-points", type=int, default=60)
    common(p)
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("twist-untwist-scan",
                       help="QFI and reciprocal-error curves vs N at t = N^exponent")
    p.add_argument("--n-min", type=int, default=20)
    p.add_argument("--n-max", type=int, default=100)
    p.add_argument("--n-step", type=int, default=10)
    p.add_argument("--exponent", type=float, required=True)
    p.add_argument("--rot", default="x", help="x|y|z or 'xi,theta'")
    p.add_argument("--phi", type=float, default=1e-3)
    common(p)
    p.set_defaults(func=cmd_twist_untwist_scan)

    p = sub.add_parser("fr-variance", help="analytic ring variance, optionally vs brute force")
    p.add_argument("--n", type=int, required=True, help="even; the ring has n+2 sites")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--xi", type=float, default=math.pi / 2)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--branch", choices=("auto", "smallk", "bigk"), default="auto")
    p.add_argument("--brute", action="store_true", help="add a statevector cross-check column")
    common(p)
    p.set_defaults(func=cmd_fr_variance)

    p = sub.add_parser("fr-qfi", help="direction-maximized ring QFI over a time grid")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--t-min", type=float, default=0.05)
    p.add_argument("--t-max", type=float, default=math.pi / 2)
    p.add_argument("--t-points", type=int, default=40)
    p.add_argument("--branch", choices=("auto", "smallk", "bigk"), default="auto")
    common(p)
    p.set_defaults(func=cmd_fr_qfi)

    p = sub.add_parser("fr-optimize",
                       help="jointly optimized twist-untwist protocol over a time grid")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--phi", type=float, default=1e-3)
    p.add_argument("--t-points", type=int, default=40)
    p.add_argument("--maxiter", type=int, default=250)
    common(p)
    p.set_defaults(func=cmd_fr_optimize)

    p = sub.add_parser("husimi", help="Husimi Q of the twisted probe on an angle grid")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--xi-points", type=int, default=61)
    p.add_argument("--theta-points", type=int, default=121)
    p.add_argument("--density", action="store_true",
                   help="scale by (N+1)/(4 pi) to a quasi-probability density")
    common(p)
    p.set_defaults(func=cmd_husimi)

    p = sub.add_parser("verify", help="run the brute-force cross-check suites")
    p.add_argument("--suite", choices=("closed-form", "appendix-c", "ghz", "qcri", "all"),
                   default="all")
    p.add_argument("--sites", type=int, default=8, help="ring size for the appendix-c suite")
    p.add_argument("--draws", type=int, default=100)
    common(p)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
