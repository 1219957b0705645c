"""Command-line entry point.

Commands and the CSV files they write (all floats at 17 significant digits):

``times``          ``times.csv``: ``quantity,value`` rows ``tau_1..tau_n, t_opt, russell_time``
``check-b``        ``check_b.csv``: ``class,member,singular_orders``
``simulate``       ``terminal.csv``: ``x,w1..wn``; with ``--store-trajectory`` also
                   ``trajectory.csv``: ``t,x,component,value``
``control``        ``control_report.csv``: ``quantity,value``; ``control.csv``: ``t,u1..um``;
                   ``terminal.csv``
``observability``  ``observability.csv``: ``T,constant_estimate,iterations,residual``
``scan``           ``observability_scan.csv`` (same columns) and ``.meta``
``duality``        ``duality.csv``: ``trial,gap_discrete,gap_pde``
``study NAME``     ``NAME.csv`` and ``NAME.meta``

Exit status: 0 on success, 1 when a study check fails, 2 on bad input.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import ConfigError, RunConfig, load_config, parse_config
from .fixtures import k1m2_system, state
from .hum import observability_constant, synthesize_exact_control, synthesize_null_control
from .model import InvalidSystemError, in_class_B, in_class_Be, singular_trailing_minors, t_opt
from .solver import (
    Grid,
    _fmt,
    solve_primal,
    write_control_csv,
    write_terminal_csv,
    write_trajectory_csv,
)

DEFAULT_CONFIG = """\
[system]
form = "u"
k = 1
m = 1
speeds = [1.0, 1.0]
B = [[1.0]]
"""

SCAN_FACTORS = (0.5, 0.8, 0.9, 1.1, 1.2, 1.5)


def _write_pairs(path, pairs):
    with open(path, "w") as fh:
        fh.write("quantity,value\n")
        for key, val in pairs:
            fh.write(f"{key},{_fmt(val)}\n")


def _horizon(cfg, system, factor=1.2):
    return cfg.T if cfg.T is not None else factor * t_opt(system.speeds).t_opt


def cmd_times(cfg, system, args):
    rep = t_opt(system.speeds)
    pairs = [(f"tau_{i}", v) for i, v in enumerate(rep.tau, start=1)]
    pairs += [("t_opt", rep.t_opt), ("russell_time", rep.russell_time)]
    for key, val in pairs:
        print(f"{key} = {float(val)!r}")
    _write_pairs(Path(cfg.out) / "times.csv", pairs)
    return 0


def _verdict(name, B, upto):
    bad = singular_trailing_minors(B, upto)
    if not bad:
        return f"in class {name}", bad
    return f"not in class {name} (trailing {bad[0]}×{bad[0]} singular)", bad


def cmd_check_b(cfg, system, args):
    k, m, B = system.k, system.m, system.B
    rows = []
    text, bad = _verdict("B", B, min(k, m - 1))
    print(text)
    rows.append(("B", in_class_B(B, k, m), bad))
    if m >= k:
        text, bad = _verdict("B_e", B, k)
        print(text)
        rows.append(("B_e", in_class_Be(B, k, m), bad))
    with open(Path(cfg.out) / "check_b.csv", "w") as fh:
        fh.write("class,member,singular_orders\n")
        for name, member, orders in rows:
            fh.write(f"{name},{int(member)},{' '.join(map(str, orders))}\n")
    return 0


def cmd_simulate(cfg, system, args):
    grid = Grid(cfg.nx, cfg.cfl)
    T = _horizon(cfg, system)
    res = solve_primal(system, state(cfg.w0, grid.x), None, T, grid, cfg.store_trajectory)
    out = Path(cfg.out)
    write_terminal_csv(out / "terminal.csv", res.terminal, grid.x)
    if cfg.store_trajectory:
        write_trajectory_csv(out / "trajectory.csv", res.trajectory, res.times, grid.x)
    print(f"simulated T = {T:.17g} on nx = {grid.nx}; max |w(T)| = {np.max(np.abs(res.terminal.values)):.6g}")
    return 0


def cmd_control(cfg, system, args):
    grid = Grid(cfg.nx, cfg.cfl)
    T = _horizon(cfg, system)
    w0 = state(cfg.w0, grid.x)
    kw = dict(eps=cfg.eps, cg_tol=cfg.cg_tol, cg_maxit=cfg.cg_maxit,
              eps_relative=cfg.eps_relative, experimental=cfg.experimental)
    if cfg.mode == "exact":
        if cfg.wT is None:
            raise ValueError("exact mode needs a target profile wT in [run]")
        rep = synthesize_exact_control(system, w0, state(cfg.wT, grid.x), T, grid, **kw)
    else:
        rep = synthesize_null_control(system, w0, T, grid, **kw)
    out = Path(cfg.out)
    pairs = [("T", T), ("nx", grid.nx)] + list(rep.scalars().items())
    _write_pairs(out / "control_report.csv", pairs)
    write_control_csv(out / "control.csv", rep.control, rep.control.times)
    final = solve_primal(system, w0, rep.control, T, grid).terminal
    write_terminal_csv(out / "terminal.csv", final, grid.x)
    for key, val in pairs:
        print(f"{key} = {val!r}")
    for d in rep.diagnostics:
        print(f"note: {d}")
    return 0


def _variant(cfg):
    return "exact" if cfg.mode == "exact" else "null"


def cmd_observability(cfg, system, args):
    grid = Grid(cfg.nx, cfg.cfl)
    T = _horizon(cfg, system)
    e = observability_constant(system, T, grid, variant=_variant(cfg), seed=cfg.seed)
    with open(Path(cfg.out) / "observability.csv", "w") as fh:
        fh.write("T,constant_estimate,iterations,residual\n")
        fh.write(f"{_fmt(e.T)},{_fmt(e.constant_estimate)},{e.iterations},{_fmt(e.residual)}\n")
    print(f"T = {e.T:.17g}  estimate = {e.constant_estimate:.6g}  ({e.method}, {e.iterations} it)")
    return 0


def _finish(record, cfg):
    ex.write_study(record, cfg.out)
    for row in record.rows:
        print("  ".join(str(v) for v in row))
    for f in record.flags:
        print(f"flag: {f}")
    for f in record.failures:
        print(f"FAILED: {f}", file=sys.stderr)
    return 0 if record.passed else 1


def cmd_scan(cfg, system, args):
    to = t_opt(system.speeds).t_opt
    rec = ex.observability_scan(system, [f * to for f in SCAN_FACTORS], Grid(cfg.nx, cfg.cfl),
                                variant=_variant(cfg), seed=cfg.seed)
    return _finish(rec, cfg)


def cmd_duality(cfg, system, args):
    grid = Grid(cfg.nx, cfg.cfl)
    T = _horizon(cfg, system)
    trials = 50
    d = ex.duality_gaps(system, T, grid, trials, cfg.seed, "discrete")
    p = ex.duality_gaps(system, T, grid, trials, cfg.seed, "pde")
    with open(Path(cfg.out) / "duality.csv", "w") as fh:
        fh.write("trial,gap_discrete,gap_pde\n")
        for i, (a, b) in enumerate(zip(d, p)):
            fh.write(f"{i},{_fmt(a)},{_fmt(b)}\n")
    print(f"max gap: discrete adjoint {max(d):.3e}, dual PDE {max(p):.3e}")
    return 0


def cmd_study(cfg, system, args):
    name = args.name
    grid_cfl = cfg.cfl
    if name == "adjoint_consistency":
        rec = ex.adjoint_consistency_study(system, _horizon(cfg, system),
                                           [Grid(n, grid_cfl) for n in (50, 100, 200, 400)],
                                           trials=50, seed=cfg.seed)
    elif name == "observability_scan":
        return cmd_scan(cfg, system, args)
    elif name == "russell_comparison":
        rec = ex.russell_comparison([system] + ex.random_systems(100, cfg.seed), seed=cfg.seed)
    elif name == "null_control_convergence":
        to = t_opt(system.speeds).t_opt
        rec = ex.null_control_convergence(
            system, cfg.w0, _horizon(cfg, system), [Grid(n, grid_cfl) for n in (100, 200, 400)],
            [1e-4, 1e-6], negative_T=0.8 * to, cg_tol=cfg.cg_tol, cg_maxit=cfg.cg_maxit)
    elif name == "augmentation_limit":
        target = system if system.m > system.k else k1m2_system()
        rec = ex.augmentation_limit_study(target, [0.1, 0.01, 0.001])
    else:
        raise ValueError(f"unknown study {name!r}; choose from {', '.join(ex.STUDIES)}")
    return _finish(rec, cfg)


COMMANDS = {
    "times": cmd_times,
    "check-b": cmd_check_b,
    "simulate": cmd_simulate,
    "control": cmd_control,
    "observability": cmd_observability,
    "scan": cmd_scan,
    "duality": cmd_duality,
    "study": cmd_study,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="system/run definition (default: 2x2 unit-speed system)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--nx", type=int, metavar="N")
    common.add_argument("--cfl", type=float, metavar="F")
    common.add_argument("--T", type=float, metavar="F", dest="T")
    common.add_argument("--eps", type=float, metavar="F")
    common.add_argument("--mode", choices=("null", "exact"))
    common.add_argument("--store-trajectory", action="store_true", default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hyperhum", description=__doc__.splitlines()[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "study":
            p.add_argument("name", choices=ex.STUDIES)
    return parser


def _configure(args) -> tuple[RunConfig, object]:
    if args.config:
        cfg, system = load_config(args.config)
    else:
        cfg, system = parse_config(DEFAULT_CONFIG)
    for key in ("out", "seed", "nx", "cfl", "T", "eps", "mode", "store_trajectory"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg, key, val)
    cfg.command = args.command
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    return cfg, system


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, system = _configure(args)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return COMMANDS[args.command](cfg, system, args)
    except ConfigError as exc:
        print(f"error: invalid config\n{exc}", file=sys.stderr)
    except (InvalidSystemError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
