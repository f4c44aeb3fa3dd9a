"""Command-line front end.

Exit codes: 0 ok, 2 usage or parameter window, 3 solver failure,
4 bad bracket, 5 failed verification.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .errors import (
    BadBracket,
    BudgetExhausted,
    DomainExceeded,
    IntegrationError,
    OutOfDomain,
    ParameterOutOfWindow,
)
from .family import Tau, consistency_check, solve_g, solve_x, u_eval, u_residual, UView
from .ivp import DEFAULT_CONFIG, IntegratorConfig
from .portrait import equilibria, portrait_grid
from .profile import build_profile
from .sphere import (
    PhaseState,
    bracket_FH_terms,
    curvature_finite_difference,
    gaussian_curvature,
    hamiltonian_flow,
    identity_residual,
    partial_brackets,
    pole_report,
)
from .threshold import find_T

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_BRACKET, EXIT_VERIFY = 0, 2, 3, 4, 5

VERIFY_CHECKS = ("bracket", "conservation", "curvature", "consistency", "poles")
BRACKET_TOL = 1e-9
DRIFT_TOL = 1e-6
CURVATURE_ANCHOR_TOL = 1e-6
CURVATURE_ORACLE_TOL = 1e-5
CONSISTENCY_TOL = 1e-8
U_RESIDUAL_TOL = 1e-7
EXTRAPOLATION_TOL = 1e-6
CORRUPTION = 0.1


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    tau: float = 0.0
    rel_tol: float = DEFAULT_CONFIG.rel_tol
    abs_tol: float = DEFAULT_CONFIG.abs_tol
    output: str | None = None
    format: str = "csv"
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.tau):
            raise UsageError("tau must be finite")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise UsageError("tolerances must be positive")
        if self.format not in ("csv", "json"):
            raise UsageError(f"unknown format {self.format!r}")
        if self.seed < 0:
            raise UsageError("seed must be non-negative")

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def integrator(self) -> IntegratorConfig:
        return DEFAULT_CONFIG.with_tol(self.rel_tol, self.abs_tol)


# ---------------------------------------------------------------- output


def _plain(value):
    """Recursively convert numpy scalars/arrays for ``json``."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


def format_csv(header: dict, columns: list[str], rows) -> str:
    buf = io.StringIO()
    for key in sorted(header):
        buf.write(f"# {key}={header[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format(float(v), ".17g") for v in row])
    return buf.getvalue()


def emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header(cfg: RunConfig, **extra) -> dict:
    head = {"version": __version__, "tau": repr(cfg.tau), "rel_tol": repr(cfg.rel_tol),
            "abs_tol": repr(cfg.abs_tol)}
    head.update({k: (repr(v) if isinstance(v, float) else v) for k, v in extra.items()})
    return head


def _emit_table(cfg: RunConfig, header: dict, columns, rows) -> None:
    if cfg.format == "csv":
        emit(format_csv(header, columns, rows), cfg.output)
    else:
        data = {"config": header, "columns": list(columns), "rows": [list(map(float, r)) for r in rows]}
        emit(dumps_json(data), cfg.output)


# ---------------------------------------------------------------- commands


def cmd_solve(cfg: RunConfig, args) -> int:
    tau = Tau(cfg.tau)
    n = args.points
    if n < 2:
        raise UsageError("--points must be at least 2")
    config = cfg.integrator()
    form = args.formulation
    if form == "x":
        if not args.t_max > 0:
            raise UsageError("--t-max must be positive")
        t_min = 0.0 if args.t_min is None else args.t_min
        if not -args.t_max <= t_min < args.t_max:
            raise UsageError("--t-min must lie in [-t_max, t_max)")
        sol = solve_x(tau, t_max=args.t_max, config=config)
        grid = np.linspace(t_min, args.t_max, n)
        data = sol.jet(grid)
        columns = ["t", "x", "x1", "x2", "x3"]
        extra = {"formulation": "x", "t_max": args.t_max}
    elif form == "u":
        if not 0 < args.r_min < args.r_max:
            raise UsageError("need 0 < --r-min < --r-max")
        t_max = max(abs(math.log(args.r_min)), abs(math.log(args.r_max)), 1e-3)
        view = UView(solve_x(tau, t_max=t_max, config=config))
        grid = np.geomspace(args.r_min, args.r_max, n)
        data = u_eval(view, grid)
        columns = ["r", "u", "u1", "u2", "u3"]
        extra = {"formulation": "u", "r_min": args.r_min, "r_max": args.r_max}
    else:
        gsol = solve_g(tau, config=config)
        grid = np.linspace(1.0, 0.0, n)
        g, g1, g2 = gsol.state(grid)
        den = g - 2.0 * g1 * grid
        g3 = g2 * (3.0 * g1 + 4.0 * grid * g2) / den
        data = np.array([g, g1, g2, g3])
        columns = ["s", "g", "g1", "g2", "g3"]
        extra = {"formulation": "g"}
    rows = np.column_stack([grid, data.T])
    _emit_table(cfg, _header(cfg, **extra), columns, rows)
    return EXIT_OK


def cmd_find_t(cfg: RunConfig, args) -> int:
    result = find_T(tol=args.tol, initial_bracket=tuple(args.bracket), config=cfg.integrator())
    report = {"config": _header(cfg, tol=args.tol, bracket=list(args.bracket))}
    report.update(result.as_dict())
    report["bracket_width"] = result.width
    emit(dumps_json(report), cfg.output)
    return EXIT_OK


def cmd_portrait(cfg: RunConfig, args) -> int:
    rows = portrait_grid(tuple(args.q_range), tuple(args.p_range), args.n)
    header = _header(cfg, field="q'=qp, p'=1+2q^2-3q^4+p-7q^2p-2p^2", n=args.n)
    header.pop("tau")
    if cfg.format == "json":
        data = {
            "config": header,
            "columns": ["q", "p", "q_dot", "p_dot"],
            "rows": rows.tolist(),
            "equilibria": [
                {"q": e.point.q, "p": e.point.p, "eigenvalues": list(e.eigenvalues), "kind": e.kind.value}
                for e in equilibria()
            ],
        }
        emit(dumps_json(data), cfg.output)
    else:
        emit(format_csv(header, ["q", "p", "q_dot", "p_dot"], rows), cfg.output)
    return EXIT_OK


# ---------------------------------------------------------------- verification


def _check(name, n, residual, tol, passed=None, **detail):
    residual = float(residual)
    ok = residual <= tol if passed is None else bool(passed)
    out = {"check": name, "n_samples": int(n), "max_residual": residual, "tolerance": tol, "pass": ok}
    if detail:
        out["detail"] = detail
    return out


def random_states(rng: np.random.Generator, n: int) -> np.ndarray:
    """Rows ``(phi, y, p_phi, p_y)`` uniform on ``[0, 2pi) x [-1, 1]^3``."""
    phi = rng.uniform(0.0, 2 * math.pi, n)
    rest = rng.uniform(-1.0, 1.0, (3, n))
    return np.vstack([phi, rest])


def verify_bracket(tau, config, samples, seed, corrupt=False):
    profile = build_profile(tau, config)
    z = random_states(np.random.default_rng(seed), samples)
    jets = profile.jets(z[1])
    if corrupt:
        jets = jets.copy()
        jets[2] += CORRUPTION
        jets[4] += CORRUPTION
    terms = bracket_FH_terms(z, jets)
    scale = np.abs(terms).sum(axis=0)
    rel = np.abs(terms.sum(axis=0)) / np.where(scale > 0, scale, 1.0)
    pa, pb = [], []
    for k in range(samples):
        parts = partial_brackets(z[:, k], jets[:, k]).relative
        pa.append(parts[0])
        pb.append(parts[1])
    ident = identity_residual(jets, relative=True)
    return [
        _check("bracket_FH", samples, rel.max(), BRACKET_TOL),
        _check("bracket_V_p3_plus_Hhat_E", samples, max(pa), BRACKET_TOL),
        _check("bracket_V_E", samples, max(pb), BRACKET_TOL),
        _check("identity_residual", samples, ident.max(), BRACKET_TOL),
    ]


def verify_conservation(tau, config, seed, n_random=2, t_end=100.0):
    profile = build_profile(tau, config)
    starts = [PhaseState(0.0, 0.0, 1.0, 0.0), PhaseState(0.7, 0.3, 0.2, -0.5)]
    starts += [PhaseState(*col) for col in random_states(np.random.default_rng(seed), n_random).T]
    drift_h, drift_f = [], []
    for s in starts:
        rep = hamiltonian_flow(s, tau, (0.0, t_end), config, profile=profile)
        drift_h.append(rep.max_drift_H)
        drift_f.append(rep.max_drift_F)
    return [
        _check("conservation_H", len(starts), max(drift_h), DRIFT_TOL, t_end=t_end),
        _check("conservation_F", len(starts), max(drift_f), DRIFT_TOL, t_end=t_end),
    ]


def verify_curvature(tau, config, samples=41):
    profile = build_profile(tau, config)
    radii = np.geomspace(1e-2, 1e2, samples)
    K = gaussian_curvature(tau, radii, profile=profile)
    oracle_r = np.geomspace(1e-2, 1e2, 9)
    K_fd = np.array([curvature_finite_difference(profile, r) for r in oracle_r])
    oracle_gap = np.max(np.abs(gaussian_curvature(tau, oracle_r, profile=profile) - K_fd))
    out = [_check("curvature_vs_finite_difference", len(oracle_r), oracle_gap, CURVATURE_ORACLE_TOL)]
    if tau.value == 0.0:
        out.append(_check("curvature_round_sphere", samples, np.max(np.abs(K - 1.0)), CURVATURE_ANCHOR_TOL))
    else:
        spread = abs(gaussian_curvature(tau, 0.5, profile=profile) - gaussian_curvature(tau, 2.0, profile=profile))
        out.append(_check("curvature_nonconstant", 2, spread, 1e-3, passed=spread >= 1e-3,
                          note="passes when |K(0.5) - K(2)| >= tolerance"))
    return out


def verify_consistency(tau, config, samples=25):
    times = np.linspace(0.0, 6.0, samples)
    out = []
    for sign in (1, -1):
        t = Tau(sign * tau.value, tau.is_trusted)
        rep = consistency_check(t, times, config)
        out.append(_check(f"consistency_tau{'+' if sign > 0 else '-'}", samples, rep.max_residual,
                          CONSISTENCY_TOL, max_d=rep.max_d, max_dd=rep.max_dd))
        if tau.value == 0.0:
            break
    view = UView(solve_x(tau, config=config))
    r = np.geomspace(1e-3, 1e3, samples)
    res = u_residual(u_eval(view, r), r)
    out.append(_check("radial_equation_residual", samples, np.max(res), U_RESIDUAL_TOL))
    return out


def verify_poles(tau, config):
    rep = pole_report(tau, config)
    smallest = min(abs(rep.zeta0), abs(rep.xi0))
    return [
        _check("poles_nonzero_coefficients", 2, smallest, 1e-6, passed=smallest > 1e-6,
               zeta0=rep.zeta0, xi0=rep.xi0, note="passes when min(|zeta0|, |xi0|) > tolerance"),
        _check("poles_extrapolation_agreement", 2, rep.extrapolation_gap, EXTRAPOLATION_TOL),
        _check("poles_potential_decay", len(rep.far_radii) + len(rep.near_radii),
               _decay_ratio(rep), 2.0, passed=rep.decays(),
               far_potential=list(rep.far_potential), near_potential=list(rep.near_potential)),
        _check("poles_curvature_bounded", len(rep.curvature), rep.max_abs_curvature, 1e3,
               pole_curvature=list(rep.pole_curvature)),
    ]


def _decay_ratio(rep) -> float:
    ratios = []
    for r, v in zip(rep.far_radii, rep.far_potential):
        ratios.append(_ratio(v, abs(rep.nu_limit) / r))
    for r, v in zip(rep.near_radii, rep.near_potential):
        ratios.append(_ratio(v, abs(rep.mu_limit) * r))
    return max(ratios)


def _ratio(value, envelope):
    if envelope == 0.0:
        return 0.0 if value == 0.0 else math.inf
    return value / envelope


def cmd_verify(cfg: RunConfig, args) -> int:
    tau = Tau(cfg.tau)
    config = cfg.integrator()
    which = VERIFY_CHECKS if args.check == "all" else (args.check,)
    checks = []
    for name in which:
        if name == "bracket":
            checks += verify_bracket(tau, config, args.samples, cfg.seed, corrupt=args.corrupt_jet)
        elif name == "conservation":
            checks += verify_conservation(tau, config, cfg.seed)
        elif name == "curvature":
            checks += verify_curvature(tau, config)
        elif name == "consistency":
            checks += verify_consistency(tau, config)
        else:
            checks += verify_poles(tau, config)
    passed = all(c["pass"] for c in checks)
    report = {
        "config": _header(cfg, check=args.check, samples=args.samples, seed=cfg.seed),
        "checks": checks,
        "pass": passed,
    }
    emit(dumps_json(report), cfg.output)
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_report(cfg: RunConfig, args) -> int:
    tau = Tau(cfg.tau)
    config = cfg.integrator()
    xsol = solve_x(tau, config=config)
    gsol = solve_g(tau, config=config)
    poles = pole_report(tau, config)
    radii = [0.1, 0.5, 1.0, 2.0, 10.0]
    L = gsol.limits
    report = {
        "config": _header(cfg),
        "x_at_1": float(xsol(1.0)),
        "x_at_minus_1": float(xsol(-1.0)),
        "g_limits": {"g0": L.g0, "g1": L.g1, "g2": L.g2, "errors": [L.err0, L.err1, L.err2]},
        "poles": poles.as_dict(),
        "curvature": {"radii": radii, "K": gaussian_curvature(tau, radii, config)},
        "equilibria": [
            {"q": e.point.q, "p": e.point.p, "eigenvalues": list(e.eigenvalues), "kind": e.kind.value}
            for e in equilibria()
        ],
    }
    if args.with_threshold:
        report["threshold"] = find_T(config=config).as_dict()
    emit(dumps_json(report), cfg.output)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spherelab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--rel-tol", type=float)
    common.add_argument("--abs-tol", type=float)
    common.add_argument("--output", "-o")
    common.add_argument("--config", help="JSON file with run settings; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="tabulate a solution")
    p.add_argument("--tau", type=float)
    p.add_argument("--formulation", choices=("x", "u", "g"), default="x")
    p.add_argument("--t-max", type=float, default=5.0)
    p.add_argument("--t-min", type=float)
    p.add_argument("--r-min", type=float, default=0.1)
    p.add_argument("--r-max", type=float, default=10.0)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--format", choices=("csv", "json"))

    p = sub.add_parser("find-t", parents=[common], help="bisect for the critical parameter")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--bracket", type=float, nargs=2, default=[-1.0, 0.0], metavar=("LOW", "HIGH"))

    p = sub.add_parser("portrait", parents=[common], help="vector field on a grid")
    p.add_argument("--q-range", type=float, nargs=2, default=[-2.0, 2.0])
    p.add_argument("--p-range", type=float, nargs=2, default=[-2.0, 2.0])
    p.add_argument("--n", type=int, default=21)
    p.add_argument("--format", choices=("csv", "json"))

    p = sub.add_parser("verify", parents=[common], help="run identity and regularity checks")
    p.add_argument("check", choices=VERIFY_CHECKS + ("all",))
    p.add_argument("--tau", type=float)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--corrupt-jet", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("report", parents=[common], help="summary of one family member")
    p.add_argument("--tau", type=float)
    p.add_argument("--with-threshold", action="store_true")
    return parser


def _run_config(args) -> RunConfig:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
    for key in ("tau", "rel_tol", "abs_tol", "output", "format", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if "rel_tol" in data and "abs_tol" not in data:
        data["abs_tol"] = data["rel_tol"]
    if args.command in ("find-t", "verify", "report"):
        data.setdefault("format", "json")
    try:
        return RunConfig.from_mapping(data)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc


COMMANDS = {
    "solve": cmd_solve,
    "find-t": cmd_find_t,
    "portrait": cmd_portrait,
    "verify": cmd_verify,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _run_config(args)
        if getattr(args, "samples", 1) < 1:
            raise UsageError("--samples must be positive")
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ParameterOutOfWindow, OutOfDomain) as exc:
        print(f"spherelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BadBracket as exc:
        print(f"spherelab: BadBracket: {exc}", file=sys.stderr)
        return EXIT_BRACKET
    except (IntegrationError, BudgetExhausted, DomainExceeded) as exc:
        print(f"spherelab: solver failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
