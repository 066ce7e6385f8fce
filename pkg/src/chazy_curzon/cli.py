"""Command-line front end: ``chazy-curzon <subcommand> [flags]``.

Settings come from a plain-text ``key = value`` file (``--config`` or the
``CHAZY_CURZON_CONFIG`` environment variable); flags override file values.
Exit codes: 0 success, 1 argument or config error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, fields
from typing import Sequence, TextIO

import numpy as np

from . import metric
from .analysis import CONVENTIONS, chazy_curzon_well, log_fit, period_scan
from .dynamics import FIELD_MODES, H2_MODES, OrbitConstants, PhasePoint, equilibrium_solve, v_eff, v_potential
from .errors import NUMERICAL_ERRORS, ConfigError, SingularParameterError
from .integrate import METHODS, EscapeBounds, FFlow, integrate, poincare_section, rotation_number
from .metric import MetricParams
from .papercheck import CheckConfig, build_report, report_csv, report_json, run_checks

CONFIG_ENV = "CHAZY_CURZON_CONFIG"
CONFIG_VERSION = "1"

EQUILIBRIA_COLUMNS = ["rho0", "E2_solved", "L2_solved", "E2_closed", "L2_closed", "vpp", "vpp_printed",
                      "g", "vzz", "class", "sign_agreement"]
GRID_COLUMNS = ["rho", "z", "psi", "gamma", "omega", "v", "v_eff"]
TRAJECTORY_COLUMNS = ["tau", "rho", "z", "p_rho", "p_z", "F", "drift"]
SECTION_COLUMNS = ["idx", "tau_cross", "rho", "p_rho", "residual"]
PERIOD_COLUMNS = ["h", "rho_minus", "rho_plus", "eps", "delta", "eta", "T", "quad_error"]


@dataclass(frozen=True)
class RunConfig:
    version: str = CONFIG_VERSION
    m: float = 1.0
    gamma_mode: str = "standard"
    field_mode: str = "gradient"
    h2_mode: str = "canonical"
    method: str = "leapfrog"
    dt: float = 1e-3
    n_steps: int = 10000
    record_every: int = 10
    rtol: float = 1e-10
    atol: float = 1e-12
    rho_max: float = 1e3
    z_max: float = 1e3
    max_tau: float = 1e5
    decades: float = 4.0
    per_decade: int = 5
    convention: str = "physical"
    seed: int = 12345
    output_dir: str = "."

    def __post_init__(self):
        def name(key):
            return f"config key {key!r} (flag --{key.replace('_', '-')})"

        choices = {
            "gamma_mode": metric.GAMMA_MODES,
            "field_mode": FIELD_MODES,
            "h2_mode": H2_MODES,
            "method": METHODS,
            "convention": CONVENTIONS,
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{name(key)} must be one of {allowed}, got {getattr(self, key)!r}")
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"config key 'version' must be {CONFIG_VERSION!r}, got {self.version!r}")
        positive = ("m", "dt", "rtol", "atol", "rho_max", "z_max", "max_tau", "decades")
        for key in positive:
            value = getattr(self, key)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name(key)} must be positive and finite, got {value!r}")
        for key in ("n_steps", "record_every", "per_decade"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{name(key)} must be >= 1, got {getattr(self, key)}")
        if not self.rtol < 1:
            raise ConfigError(f"{name('rtol')} must be < 1, got {self.rtol}")
        if self.seed < 0:
            raise ConfigError(f"{name('seed')} must be non-negative, got {self.seed}")


def load_config(path: str | None) -> RunConfig:
    """Parse a strict ``key = value`` file; ``#`` starts a comment."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from exc
    types = {f.name: f.type for f in fields(RunConfig)}
    values: dict[str, object] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate config key {key!r}")
        kind = types[key]
        try:
            values[key] = float(value) if kind == "float" else int(value) if kind == "int" else value
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: config key {key!r} expects {kind}, got {value!r}") from exc
    if "version" not in values:
        raise ConfigError(f"{path}: missing required config key 'version'")
    return RunConfig(**values)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else repr(float(x))
    return str(x)


def _open_out(path: str | None, cfg: RunConfig) -> TextIO:
    if path is None or path == "-":
        return sys.stdout
    if not os.path.isabs(path):
        path = os.path.join(cfg.output_dir, path)
    return open(path, "w", encoding="utf-8", newline="")


def _write_csv(path: str | None, cfg: RunConfig, header: list[str], rows) -> None:
    fh = _open_out(path, cfg)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _constants(args) -> OrbitConstants:
    if args.e2 is not None or args.l2 is not None:
        if args.e2 is None or args.l2 is None:
            raise ConfigError("--e2 and --l2 must be given together")
        return OrbitConstants(args.e2, args.l2)
    return equilibrium_solve(args.rho0).solved


def _merged(cfg: RunConfig, args, keys: Sequence[str]) -> RunConfig:
    updates = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    return dataclasses.replace(cfg, **updates)


def cmd_equilibria(args, cfg: RunConfig) -> int:
    if args.n < 1:
        raise ConfigError(f"--n must be >= 1, got {args.n}")
    if not 0 < args.rho_min <= args.rho_max:
        raise ConfigError(f"--rho-min/--rho-max must satisfy 0 < min <= max, got {args.rho_min}, {args.rho_max}")
    rows = []
    for rho0 in np.linspace(args.rho_min, args.rho_max, args.n):
        rho0 = float(rho0)
        try:
            rec = equilibrium_solve(rho0)
        except (SingularParameterError, ArithmeticError):
            nan = math.nan
            rows.append([rho0, nan, nan, nan, nan, nan, nan, nan, nan, "degenerate", False])
            continue
        rows.append([rho0, rec.E2_solved, rec.L2_solved, rec.E2_closed, rec.L2_closed, rec.vpp,
                     rec.vpp_printed, rec.g, rec.vzz, rec.stability_class, rec.sign_agreement])
    _write_csv(args.out, cfg, EQUILIBRIA_COLUMNS, rows)
    return 0


def cmd_potential_grid(args, cfg: RunConfig) -> int:
    cfg = _merged(cfg, args, ("m", "gamma_mode"))
    params = MetricParams(cfg.m, cfg.gamma_mode)
    oc = _constants(args)
    if args.n_rho < 1 or args.n_z < 1:
        raise ConfigError("--n-rho and --n-z must be >= 1")
    rows = []
    for rho in np.linspace(args.rho_min, args.rho_max, args.n_rho):
        for z in np.linspace(args.z_min, args.z_max, args.n_z):
            rho, z = float(rho), float(z)
            pt = (rho, z)
            rows.append([rho, z, metric.psi(pt, params), metric.gamma_fn(pt, params), metric.omega(pt, params),
                         v_potential(rho, z, oc), v_eff(rho, z, oc, params)])
    _write_csv(args.out, cfg, GRID_COLUMNS, rows)
    return 0


def _initial_point(args) -> PhasePoint:
    rho = args.rho if args.rho is not None else 1.02 * args.rho0
    return PhasePoint(rho, args.z, args.p_rho, args.p_z)


def cmd_integrate(args, cfg: RunConfig) -> int:
    cfg = _merged(cfg, args, ("method", "dt", "n_steps", "record_every", "field_mode", "rtol", "rho_max", "z_max"))
    oc = _constants(args)
    traj = integrate(_initial_point(args), oc, cfg.dt, cfg.n_steps, cfg.method, field_mode=cfg.field_mode,
                     rtol=cfg.rtol, atol=cfg.atol, bounds=EscapeBounds(cfg.rho_max, cfg.z_max),
                     record_every=cfg.record_every)
    drift = traj.drift
    rows = ([t, *s, f, d] for t, s, f, d in zip(traj.tau, traj.states, traj.f_values, drift))
    _write_csv(args.out, cfg, TRAJECTORY_COLUMNS, rows)
    return 0


def cmd_poincare(args, cfg: RunConfig) -> int:
    cfg = _merged(cfg, args, ("field_mode", "rtol", "max_tau", "rho_max", "z_max"))
    if args.n_crossings < 1:
        raise ConfigError(f"--n-crossings must be >= 1, got {args.n_crossings}")
    oc = _constants(args)
    pts = poincare_section(_initial_point(args), oc, args.n_crossings, flow=FFlow(oc, cfg.field_mode),
                           max_tau=cfg.max_tau, rtol=cfg.rtol, atol=cfg.atol,
                           bounds=EscapeBounds(cfg.rho_max, cfg.z_max))
    _write_csv(args.out, cfg, SECTION_COLUMNS,
               ([i, p.tau_cross, p.rho, p.p_rho, p.refine_residual] for i, p in enumerate(pts)))
    if args.rotation:
        print(f"rotation_number={_fmt(rotation_number(pts))}", file=sys.stderr)
    return 0


def cmd_period(args, cfg: RunConfig) -> int:
    cfg = _merged(cfg, args, ("decades", "per_decade", "convention"))
    well = chazy_curzon_well(args.rho0)
    samples = period_scan(well, cfg.decades, cfg.per_decade, cfg.convention, start=args.start)
    _write_csv(args.out, cfg, PERIOD_COLUMNS,
               ([s.h, s.rho_minus, s.rho_plus, s.eps, s.delta, s.eta, s.T, s.quad_error] for s in samples))
    if args.fit:
        fit = log_fit(samples, well.curvature, against=args.fit_against)
        record = {k: (v if not (isinstance(v, float) and math.isnan(v)) else None) for k, v in fit.as_dict().items()}
        record["rho0"] = args.rho0
        record["kind"] = well.kind
        fh = _open_out(args.fit_out, cfg)
        try:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        finally:
            if fh is not sys.stdout:
                fh.close()
    return 0


def cmd_papercheck(args, cfg: RunConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.seed
    check_cfg = CheckConfig(seed=seed, n_points=args.n_points, saddle_rho0=args.saddle_rho0)
    results = run_checks(check_cfg)
    report = build_report(results, check_cfg, {"run_config": dataclasses.asdict(cfg)})
    fh = _open_out(args.out, cfg)
    try:
        fh.write(report_json(report))
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.csv is not None:
        fh = _open_out(args.csv, cfg)
        try:
            fh.write(report_csv(results))
        finally:
            if fh is not sys.stdout:
                fh.close()
    return 0


def _add_constants(p: argparse.ArgumentParser, rho0_default: float | None = 8.0) -> None:
    p.add_argument("--rho0", type=float, default=rho0_default,
                   help=f"equilibrium radius whose solved (E2, L2) are used, in units of m (default: {rho0_default})")
    p.add_argument("--e2", type=float, default=None, help="E^2, overrides --rho0 (dimensionless; default: unset)")
    p.add_argument("--l2", type=float, default=None, help="L^2, overrides --rho0 (units of m^2; default: unset)")


def _add_initial(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rho", type=float, default=None, help="initial rho, units of m (default: 1.02 * rho0)")
    p.add_argument("--z", type=float, default=0.1, help="initial z, units of m (default: 0.1)")
    p.add_argument("--p-rho", type=float, default=0.0, help="initial p_rho, dimensionless (default: 0)")
    p.add_argument("--p-z", type=float, default=0.0, help="initial p_z, dimensionless (default: 0)")


def _add_out(p: argparse.ArgumentParser, what: str) -> None:
    p.add_argument("--out", default=None, help=f"{what} path, relative to output_dir; '-' or unset is stdout (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    d = RunConfig()
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help=f"key = value config file (default: ${CONFIG_ENV} if set, else built-in defaults)")
    parser = _Parser(prog="chazy-curzon", description="Chazy-Curzon reduced geodesic dynamics and formula audits.",
                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("equilibria", parents=[common], help="equilibrium family table (CSV)")
    p.add_argument("--rho-min", type=float, default=1.05, help="smallest rho0, units of m (default: 1.05)")
    p.add_argument("--rho-max", type=float, default=6.0, help="largest rho0, units of m (default: 6.0)")
    p.add_argument("--n", type=int, default=100, help="number of rho0 values, linearly spaced (default: 100)")
    _add_out(p, "CSV")
    p.set_defaults(func=cmd_equilibria)

    p = sub.add_parser("potential-grid", parents=[common], help="psi, gamma, Omega, v, V_eff on a grid (CSV)")
    p.add_argument("--rho-min", type=float, default=0.5, help="units of m (default: 0.5)")
    p.add_argument("--rho-max", type=float, default=10.0, help="units of m (default: 10.0)")
    p.add_argument("--n-rho", type=int, default=50, help="grid points along rho (default: 50)")
    p.add_argument("--z-min", type=float, default=-5.0, help="units of m (default: -5.0)")
    p.add_argument("--z-max", type=float, default=5.0, help="units of m (default: 5.0)")
    p.add_argument("--n-z", type=int, default=51, help="grid points along z (default: 51)")
    p.add_argument("--m", type=float, default=None, help=f"mass for psi, gamma, Omega (default: {d.m})")
    p.add_argument("--gamma-mode", choices=metric.GAMMA_MODES, default=None,
                   help=f"gamma exponent 2 (standard) or 4 (paper) (default: {d.gamma_mode})")
    _add_constants(p)
    _add_out(p, "CSV")
    p.set_defaults(func=cmd_potential_grid)

    for name, func, what in (("integrate", cmd_integrate, "trajectory"), ("poincare", cmd_poincare, "section")):
        p = sub.add_parser(name, parents=[common], help=f"{what} of the F flow (CSV)")
        _add_constants(p)
        _add_initial(p)
        p.add_argument("--field-mode", choices=FIELD_MODES, default=None,
                       help=f"exact gradient or printed force (default: {d.field_mode})")
        p.add_argument("--rtol", type=float, default=None, help=f"adaptive relative tolerance (default: {d.rtol})")
        p.add_argument("--rho-max", type=float, default=None, help=f"escape bound on rho, units of m (default: {d.rho_max})")
        p.add_argument("--z-max", type=float, default=None, help=f"escape bound on |z|, units of m (default: {d.z_max})")
        _add_out(p, "CSV")
        p.set_defaults(func=func)
        if name == "integrate":
            p.add_argument("--method", choices=METHODS, default=None, help=f"integrator (default: {d.method})")
            p.add_argument("--dt", type=float, default=None, help=f"step in tau; output spacing for adaptive_rk (default: {d.dt})")
            p.add_argument("--n-steps", type=int, default=None, help=f"number of steps (default: {d.n_steps})")
            p.add_argument("--record-every", type=int, default=None, help=f"write every k-th step (default: {d.record_every})")
        else:
            p.add_argument("--n-crossings", type=int, default=100, help="crossings of z = 0 with p_z > 0 (default: 100)")
            p.add_argument("--max-tau", type=float, default=None, help=f"integration limit in tau (default: {d.max_tau})")
            p.add_argument("--rotation", action="store_true", help="print the rotation number to stderr (default: off)")

    p = sub.add_parser("period", parents=[common], help="period function scan near an equilibrium (CSV, JSON fit)")
    p.add_argument("--rho0", type=float, required=True, help="equilibrium radius, units of m (required)")
    p.add_argument("--decades", type=float, default=None, help=f"decades of |h| scanned (default: {d.decades})")
    p.add_argument("--per-decade", type=int, default=None, help=f"samples per decade (default: {d.per_decade})")
    p.add_argument("--start", type=float, default=None,
                   help="first |h| is 10^-start (default: two decades below the well depth)")
    p.add_argument("--convention", choices=CONVENTIONS, default=None,
                   help=f"physical: sqrt(2(h-v)); printed: sqrt(h-v) (default: {d.convention})")
    p.add_argument("--fit", action="store_true", help="also write a JSON log-fit record (default: off)")
    p.add_argument("--fit-against", choices=("h", "eta"), default="h",
                   help="abscissa of the fit: ln(1/|h|) or ln(eta) (default: h)")
    p.add_argument("--fit-out", default=None, help="JSON fit path; unset appends to stdout (default: stdout)")
    _add_out(p, "CSV")
    p.set_defaults(func=cmd_period)

    p = sub.add_parser("papercheck", parents=[common], help="run the formula audits C1-C7 (JSON report)")
    p.add_argument("--seed", type=int, default=None, help=f"random seed for sample points (default: {d.seed})")
    p.add_argument("--n-points", type=int, default=1000, help="random points per identity check (default: 1000)")
    p.add_argument("--saddle-rho0", type=float, default=4.0, help="saddle used by the slope check, units of m (default: 4.0)")
    _add_out(p, "JSON report")
    p.add_argument("--csv", default=None, help="flat summary table path (default: not written)")
    p.set_defaults(func=cmd_papercheck)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(getattr(args, "config", None) or os.environ.get(CONFIG_ENV))
        return args.func(args, cfg)
    except NUMERICAL_ERRORS as exc:
        print(f"chazy-curzon {args.command}: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        # downstream closed early (e.g. `| head`); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except (ConfigError, ValueError, OSError) as exc:
        print(f"chazy-curzon {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
