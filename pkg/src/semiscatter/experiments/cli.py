"""Command line entry point: ``semiscatter <subcommand> ...``.

Exit codes: 0 success, 1 numerical-gate failure, 2 usage or config error.
Outputs go under ``--out`` or, failing that, ``$SEMISCATTER_OUTPUT/<subcommand>``.

CSV columns
    transform-check   check, error, tol, state
    free-dispersion   summary.csv: hbar, slope, stderr, ratio_max, ratio_min
                      hbar_<h>.csv: t, norm, ceiling_static, ceiling_decay
    hartree-run       diagnostics.csv: t, trace, trace_drift, rho_norm, grad_sup, weighted_norm
    vlasov-run        diagnostics.csv: t, mass, mass_drift, rho_norm, grad_sup
    sweep             dw.csv, pairings.csv, hbar_<h>/series.csv (see semiscatter.io)
    report            summary.csv: hbar, n, rank, sup_dw, x_in, z_norm, trace_drift, digest
                      gaps.csv: hbar, n, gap, digest
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .. import io as sio
from ..errors import AliasingWarning, ConfigError, FitError, RegimeWarning, SemiscatterError
from ..lattice import Lattice
from ..qstate import Params, gaussian_state

log = logging.getLogger("semiscatter")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _floats(s: str) -> list:
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from exc


def _r(s: str) -> float:
    return math.inf if s.strip().lower() in ("inf", "infinity") else float(s)


def _outdir(args, name: str) -> Path:
    return Path(args.out) if args.out else sio.output_root() / name


def _meta(args, **extra) -> dict:
    m = {k: v for k, v in vars(args).items() if k != "func"}
    m.update(extra)
    m["digest"] = hashlib.sha256(json.dumps(m, sort_keys=True, default=str).encode()).hexdigest()[:16]
    return m


# -- subcommands -----------------------------------------------------------------

def cmd_transform_check(args) -> int:
    from .checks import format_table, transform_suite

    res = transform_suite(args.d, args.n, args.hbar, args.L)
    print(format_table(res))
    out = _outdir(args, "transform-check")
    sio.write_csv(out / "checks.csv", ["check", "error", "tol", "state"],
                  [[r.name, r.error, r.tol, "skip" if r.skipped else ("pass" if r.passed else "fail")] for r in res])
    return 0 if all(r.passed for r in res) else 1


def cmd_free_dispersion(args) -> int:
    from ..propagate import free_dispersion_probe
    from .fitting import fit_power_law

    lat = Lattice(args.d, args.n, args.L)
    times = np.concatenate([[0.0], np.geomspace(args.tmin, args.tmax, args.points)])
    out = _outdir(args, "free-dispersion")
    rows, ok = [], True
    for h in args.hbars:
        g0 = gaussian_state(lat, Params(h, args.d), [0.0] * args.d, [0.0] * args.d, args.var_q, args.var_p, 1.0)
        ser = free_dispersion_probe(g0, args.r, times)
        slope, err = fit_power_law(np.column_stack([ser.t, ser.norm]), (args.tmin, args.tmax))
        ratio = ser.ratio()[1:]
        ok &= bool(np.all(ratio <= 1.0))
        rows.append([h, slope, err, float(ratio.max()), float(ratio.min())])
        sio.write_decay_series(ser, out / f"hbar_{h!r}.csv", _meta(args, hbar=h))
    sio.write_csv(out / "summary.csv", ["hbar", "slope", "stderr", "ratio_max", "ratio_min"], rows)
    for r in rows:
        print(f"hbar={r[0]:<8g} slope={r[1]:+.4f} +- {r[2]:.1e}  norm/ceiling in [{r[4]:.3f}, {r[3]:.3f}]")
    return 0 if ok else 1


def cmd_hartree_run(args) -> int:
    from ..hartree import (decay_report, evolve, potential_z_norm, scattering_report, weighted_norm_series,
                           x_in_norm)
    from ..lattice import lp_quadrature
    from .config import as_bool, load_run_config, optional_float, window

    cfg = load_run_config(args.config)
    diag = cfg.diagnostics
    r = _r(diag.get("r", "inf"))
    g0 = cfg.build_initial_state()
    out = _outdir(args, "hartree-run")
    report = {"schema": "semiscatter.hartree-run/1", "config": cfg.raw, "x_in": x_in_norm(g0), "gates": {}}
    code = 0
    try:
        traj = evolve(g0, cfg.interaction, cfg.timegrid, float(diag.get("trace_tol", 1e-8)),
                      optional_float(diag, "blowup_ceiling"), as_bool(diag, "check_lwp"))
    except SemiscatterError as exc:
        report["gates"]["integrator"] = str(exc)
        sio.write_json(out / "report.json", report)
        print(f"gate failure: {exc}", file=sys.stderr)
        return 1
    lat = cfg.lattice
    wn = weighted_norm_series(traj)
    rows = [[s.t, c[1], c[2], lp_quadrature(s.rho, r, lat.cell), s.grad_sup, w]
            for s, c, w in zip(traj.snapshots, traj.conservation, wn)]
    sio.write_csv(out / "diagnostics.csv", ["t", "trace", "trace_drift", "rho_norm", "grad_sup", "weighted_norm"], rows)
    report["halted"] = traj.halted
    report["halt_reason"] = traj.halt_reason
    report["z_norm"] = potential_z_norm(traj)
    if traj.halted:
        code = 1
    try:
        fit = decay_report(traj, r, window(diag))
        report["decay"] = {"slope_rho": fit.slope_rho, "stderr_rho": fit.stderr_rho, "slope_grad": fit.slope_grad,
                           "target_rho": fit.target_rho, "target_grad": fit.target_grad}
    except FitError as exc:
        report["decay"] = {"error": str(exc)}
    if len(traj.snapshots) > 1:
        sc = scattering_report(traj)
        report["scattering"] = {"pairs": sc.pairs, "D": sc.D, "decreasing": sc.scatters, "tail_slope": sc.tail_slope,
                                "tail_target": sc.tail_target, "note": sc.note}
    if as_bool(diag, "snapshots"):
        for k, s in enumerate(traj.snapshots):
            sio.save_ensemble(s.ensemble, out / "snapshots" / f"t{k:04d}")
    sio.write_json(out / "report.json", report)
    print(f"hartree-run: {len(traj.snapshots)} snapshots, z_norm={report['z_norm']:.4g}"
          + (f", halted: {traj.halt_reason}" if traj.halted else ""))
    return code


def cmd_vlasov_run(args) -> int:
    from ..lattice import lp_quadrature
    from ..vlasov import vlasov_evolve, vlasov_scattering_report
    from .config import _float, as_bool, load_run_config, window

    cfg = load_run_config(args.config)
    grid = cfg.vlasov_grid()
    f0 = cfg.initial_datum().sample(grid)
    out = _outdir(args, "vlasov-run")
    r = _r(cfg.diagnostics.get("r", "inf"))
    report = {"schema": "semiscatter.vlasov-run/1", "config": cfg.raw}
    try:
        traj = vlasov_evolve(f0, cfg.interaction, cfg.timegrid, _float(cfg.vlasov.get("mass_tol", "1e-6")),
                             _float(cfg.vlasov.get("cfl_safety", "4")))
    except SemiscatterError as exc:
        report["gate"] = str(exc)
        sio.write_json(out / "report.json", report)
        print(f"gate failure: {exc}", file=sys.stderr)
        return 1
    lat = grid.lattice
    rows = [[s.t, m[1], m[2], lp_quadrature(s.rho, r, lat.cell), s.grad_sup]
            for s, m in zip(traj.snapshots, traj.mass_log)]
    sio.write_csv(out / "diagnostics.csv", ["t", "mass", "mass_drift", "rho_norm", "grad_sup"], rows)
    if len(traj.snapshots) > 1:
        sc = vlasov_scattering_report(traj, r, window=window(cfg.diagnostics))
        report["scattering"] = {"pairs": sc.pairs, "cauchy": sc.cauchy, "decreasing": sc.decreasing,
                                "density_slope": sc.density_slope, "density_target": sc.density_target, "note": sc.note}
    report["min_ratio"] = traj.min_ratio
    if as_bool(cfg.diagnostics, "snapshots"):
        for k, s in enumerate(traj.snapshots):
            sio.save_field(s.f, out / "snapshots" / f"t{k:04d}", {"t": s.t})
    sio.write_json(out / "report.json", report)
    print(f"vlasov-run: {len(traj.snapshots)} snapshots, max mass drift {max(m[2] for m in traj.mass_log):.2e}")
    return 0


def cmd_sweep(args) -> int:
    from .config import load_sweep_config
    from .sweep import semiclassical_sweep

    out = _outdir(args, "sweep")
    cfg = load_sweep_config(args.config, str(out))
    cfg.seed = args.seed
    rep = semiclassical_sweep(cfg)
    for m in rep.members:
        print(f"hbar={m.hbar:<8g} n={m.n:<5d} rank={m.rank:<4d} sup d^w={m.sup_dw:.4e} z={m.z_norm:.3f}")
    for f in rep.flags():
        print(f"flag: {f}")
    if rep.aborted:
        print(f"sweep aborted: {rep.reason}", file=sys.stderr)
        return 1
    return 0


def cmd_report(args) -> int:
    src = Path(args.input)
    path = src / "report.json" if src.is_dir() else src
    if not path.exists():
        raise ConfigError(f"no report at {path}")
    rep = sio.read_json(path)
    out = Path(args.out) if args.out else path.parent / "tables"
    if rep.get("schema", "").startswith("semiscatter.correspondence"):
        dg = rep["digest"]
        rows = [[m["hbar"], m["n"], m["rank"], m["sup_dw"], m["x_in"], m["z_norm"], m["trace_drift"], dg]
                for m in rep["members"]]
        sio.write_csv(out / "summary.csv",
                      ["hbar", "n", "rank", "sup_dw", "x_in", "z_norm", "trace_drift", "digest"], rows)
        gaps = [[m["hbar"], k + 1, g, dg] for m in rep["members"] for k, g in enumerate(m["scattering_gap"])]
        sio.write_csv(out / "gaps.csv", ["hbar", "n", "gap", "digest"], gaps)
        for r in rows:
            print(f"hbar={r[0]:<8g} sup d^w={r[3]:.4e}")
    else:
        flat = []

        def walk(prefix, x):
            if isinstance(x, dict):
                for k in sorted(x):
                    walk(f"{prefix}.{k}" if prefix else k, x[k])
            elif isinstance(x, list) and all(not isinstance(v, (dict, list)) for v in x):
                for i, v in enumerate(x):
                    flat.append([f"{prefix}[{i}]", v])
            else:
                flat.append([prefix, x])

        walk("", {k: v for k, v in rep.items() if k != "config"})
        sio.write_csv(out / "summary.csv", ["key", "value"], flat)
        for k, v in flat:
            print(f"{k} = {v}")
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for stochastic probes (recorded in metadata)")
    common.add_argument("--out", default=None, help="output directory (default: $SEMISCATTER_OUTPUT/<cmd>)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="semiscatter", description="Hartree/Vlasov scattering laboratory")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("transform-check", parents=[common], help="phase-space transform invariants")
    s.add_argument("--d", type=int, default=1)
    s.add_argument("--n", type=int, default=256)
    s.add_argument("--hbar", type=float, default=1.0)
    s.add_argument("--L", type=float, default=None, help="box length (default balances q and p extents)")
    s.set_defaults(func=cmd_transform_check)

    s = sub.add_parser("free-dispersion", parents=[common], help="free density decay against its ceilings")
    s.add_argument("--r", type=_r, default=math.inf)
    s.add_argument("--hbars", type=_floats, default=[1.0, 0.5, 0.25])
    s.add_argument("--d", type=int, default=1)
    s.add_argument("--n", type=int, default=4096)
    s.add_argument("--L", type=float, default=512.0)
    s.add_argument("--var-q", dest="var_q", type=float, default=1.0)
    s.add_argument("--var-p", dest="var_p", type=float, default=0.25)
    s.add_argument("--tmin", type=float, default=5.0)
    s.add_argument("--tmax", type=float, default=50.0)
    s.add_argument("--points", type=int, default=10)
    s.set_defaults(func=cmd_free_dispersion)

    for name, fn, hlp in (("hartree-run", cmd_hartree_run, "Hartree run from a config file"),
                          ("vlasov-run", cmd_vlasov_run, "Vlasov run from a config file"),
                          ("sweep", cmd_sweep, "semiclassical sweep from a config file")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--config", required=True)
        s.set_defaults(func=fn)

    s = sub.add_parser("report", parents=[common], help="re-render a JSON report as CSV tables")
    s.add_argument("--input", required=True, help="report.json or the directory holding it")
    s.set_defaults(func=cmd_report)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"semiscatter: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", AliasingWarning)
                warnings.simplefilter("ignore", RegimeWarning)
            return args.func(args)
    except ConfigError as exc:
        print(f"semiscatter: config error: {exc}", file=sys.stderr)
        return 2
    except SemiscatterError as exc:
        print(f"semiscatter: gate failure: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())
