"""Command line entry point (``python -m threshold_nls``)."""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import grid as rg
from . import harness as H
from . import persist
from .errors import (CheckpointError, InvalidArgument, PreconditionViolation, StageFailure,
                     ThresholdNLSError)
from .evolution import Label
from .ground_state import solve_ground_state
from .linearized import assemble_operators, compute_unstable_pair
from .special import build_profiles, special_initial_data

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_UNDETERMINED = 0, 2, 3, 4


def _global_flags(parser, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="INI run configuration")
    parser.add_argument("--seed", type=int, default=d(None), help="random seed")
    parser.add_argument("--threads", type=int, default=d(1), help="parallel runs in a sweep")
    parser.add_argument("--out-dir", default=d(None), help="directory for relative output paths")


def build_parser():
    p = argparse.ArgumentParser(prog="threshold_nls", description=__doc__)
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    def grid_flags(sp):
        sp.add_argument("--b", type=float, default=None)
        sp.add_argument("--n", type=int, default=None)
        sp.add_argument("--rmax", type=float, default=None)

    s = sub.add_parser("groundstate", parents=[common], help="solve for Q")
    grid_flags(s)
    s.add_argument("--tol", type=float, default=1e-12, help="shooting bisection tolerance")
    s.add_argument("--out", default="groundstate.json")

    s = sub.add_parser("spectrum", parents=[common], help="unstable eigenpair of the linearisation")
    s.add_argument("--groundstate", help="JSON from the groundstate command (else solved here)")
    grid_flags(s)
    s.add_argument("--out", default="spectrum.json")

    s = sub.add_parser("construct", parents=[common], help="approximate threshold-solution data")
    s.add_argument("--spectrum", required=True)
    s.add_argument("--A", type=float, default=-1.0)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--t0", type=float, default=None, help="default 5/e0")
    s.add_argument("--out", default="construct.json")

    for name, helptext in (("evolve", "integrate and write the trajectory table"),
                           ("classify", "integrate and label the outcome")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        grid_flags(s)
        s.add_argument("--init", default=None,
                       help="path, builtin:Q, builtin:scaledQ=<lam>, builtin:special")
        s.add_argument("--A", type=float, default=None)
        s.add_argument("--k", type=int, default=None)
        s.add_argument("--t0", type=float, default=None)
        s.add_argument("--tend", type=float, default=None, help="negative for backward runs")
        s.add_argument("--dt", type=float, default=None)
        s.add_argument("--scheme", choices=("strang", "yoshida4"), default=None)
        s.add_argument("--sponge", choices=("on", "off"), default=None)
        s.add_argument("--record-every", type=int, default=None)
        s.add_argument("--checkpoint", default=None, help="also store the trajectory states")
        s.add_argument("--out", default=None, help="trajectory CSV")
        s.add_argument("--set", nargs="*", default=[], metavar="KEY=VALUE", help="extra config fields")
        if name == "classify":
            s.add_argument("--strict", action="store_true", help="exit 4 when Undetermined")

    s = sub.add_parser("diagnose", parents=[common], help="recompute diagnostics from stored states")
    s.add_argument("--trajectory", required=True)
    s.add_argument("--spectrum", required=True)
    s.add_argument("--R", type=float, default=10.0, help="virial radius for P_R")
    s.add_argument("--out", default="diagnostics.csv")

    s = sub.add_parser("sweep", parents=[common], help="classify many runs")
    s.add_argument("configs", nargs="*", help="INI files (default: the canonical suite)")
    s.add_argument("--filter", default=None, help="keep configs whose init kind matches")
    s.add_argument("--out", default="report.csv")
    return p


def _path(args, name):
    if name is None:
        return None
    p = Path(name)
    if args.out_dir and not p.is_absolute():
        p = Path(args.out_dir) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return str(p)


def _emit(obj):
    print(json.dumps(obj, sort_keys=True, default=H._jsonable))


def _grid(args, base):
    return (args.b if args.b is not None else base.b,
            args.n if args.n is not None else base.n,
            args.rmax if args.rmax is not None else base.r_max)


def _base_config(args):
    cfg = H.read_config(args.config) if args.config else H.RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_groundstate(args):
    b, n, rmax = _grid(args, _base_config(args))
    gs = solve_ground_state(b, rg.make_grid(n, rmax), shoot_tol=args.tol)
    doc = persist.ground_state_doc(gs)
    out = _path(args, args.out)
    persist.write_json(out, doc)
    _emit({k: doc[k] for k in ("b", "n", "rmax", "a_star", "mass", "energy", "grad_sq", "pot",
                               "c_gn", "s_c", "pohozaev_res")} | {"out": out})


def cmd_spectrum(args):
    if args.groundstate:
        gs = persist.load_ground_state(args.groundstate)
    else:
        b, n, rmax = _grid(args, _base_config(args))
        gs = solve_ground_state(b, rg.make_grid(n, rmax))
    ops = assemble_operators(gs)
    spec = compute_unstable_pair(ops, gs)
    out = _path(args, args.out)
    persist.write_json(out, persist.spectrum_doc(spec, gs))
    _emit({"e0": spec.e0, "b_norm": spec.b_norm, "residuals": spec.residuals, "out": out})


def cmd_construct(args):
    gs, spec = persist.load_spectrum(args.spectrum)
    ops = assemble_operators(gs)
    ps = build_profiles(gs, ops, spec, args.A, args.k)
    t0 = 5.0 / spec.e0 if args.t0 is None else args.t0
    u0 = special_initial_data(ps, t0)
    out = _path(args, args.out)
    persist.write_json(out, persist.construct_doc(ps, t0, u0))
    _emit({"A": ps.A, "k": ps.k, "t0": t0, "e0": ps.e0, "residual_norms": list(ps.solve_residuals),
           "out": out})


def _init_from_flags(args, cfg):
    spec = args.init
    if spec is None:
        init = cfg.init
        if isinstance(init, H.SpecialInit):
            init = H.SpecialInit(A=args.A if args.A is not None else init.A,
                                 k=args.k if args.k is not None else init.k,
                                 t0=args.t0 if args.t0 is not None else init.t0)
        return init
    if spec == "builtin:Q":
        return H.GroundStateInit()
    if spec.startswith("builtin:scaledQ="):
        try:
            return H.ScaledInit(float(spec.split("=", 1)[1]))
        except ValueError as exc:
            raise InvalidArgument(f"bad scale in {spec!r}") from exc
    if spec == "builtin:special":
        return H.SpecialInit(A=-1.0 if args.A is None else args.A,
                             k=5 if args.k is None else args.k, t0=args.t0)
    if spec.startswith("builtin:"):
        raise InvalidArgument(f"unknown builtin initial data {spec!r}")
    return H.FileInit(spec)


def _run_config(args):
    cfg = _base_config(args)
    if args.set:
        cfg = H.config_from_pairs(args.set, cfg)
    b, n, rmax = _grid(args, cfg)
    upd = dict(b=b, n=n, r_max=rmax, init=_init_from_flags(args, cfg))
    if args.tend is not None:
        if args.tend == 0:
            raise InvalidArgument("--tend must be non-zero")
        upd.update(t_end=abs(args.tend), direction=1 if args.tend > 0 else -1)
    for flag, key in (("dt", "dt"), ("scheme", "scheme"), ("record_every", "record_every")):
        if getattr(args, flag) is not None:
            upd[key] = getattr(args, flag)
    if args.sponge is not None:
        upd["sponge"] = args.sponge == "on"
    if args.out is not None:
        upd["csv"] = _path(args, args.out)
    if args.checkpoint is not None:
        upd["checkpoint"] = _path(args, args.checkpoint)
    return replace(cfg, **upd)


def cmd_evolve(args):
    cfg = _run_config(args)
    if cfg.csv is None:
        cfg = replace(cfg, csv=_path(args, "trajectory.csv"))
    outcome, rec = H.classify_run(cfg)
    _emit({"config_hash": cfg.hash(), "steps": rec.steps, "records": len(rec.t), "csv": cfg.csv,
           "outcome": outcome.to_dict()})
    return EXIT_OK


def cmd_classify(args):
    cfg = _run_config(args)
    outcome, _ = H.classify_run(cfg)
    _emit({"config_hash": cfg.hash(), "config": cfg.to_dict()} | outcome.to_dict())
    if args.strict and outcome.label is Label.UNDETERMINED:
        return EXIT_UNDETERMINED
    return EXIT_OK


def cmd_diagnose(args):
    gs, spec = persist.load_spectrum(args.spectrum)
    traj = persist.load_states(args.trajectory, gs.grid)
    if traj.b != gs.b:
        raise InvalidArgument(f"trajectory has b={traj.b}, spectrum has b={gs.b}")
    ctx = H.Context(gs, assemble_operators(gs), spec)
    rows = H.diagnose_states(traj.times, traj.states, ctx, args.R)
    out = _path(args, args.out)
    persist.write_csv(out, rows, comments=[f"source {args.trajectory}", f"R {args.R}"])
    _emit({"rows": len(rows), "out": out})


def cmd_sweep(args):
    base = _base_config(args)
    if args.configs:
        configs = [H.read_config(c) for c in args.configs]
    else:
        configs = H.canonical_suite(base)
    if args.seed is not None:
        configs = [replace(c, seed=args.seed) for c in configs]
    if args.filter:
        configs = [c for c in configs if c.init.kind == args.filter]
    table = H.sweep(configs, parallelism=args.threads)
    out = _path(args, args.out)
    Path(out).write_text(table.to_csv())
    _emit({"runs": len(table.rows), "out": out,
           "labels": {h: (l.value if l else None) for h, l in table.labels().items()}})


COMMANDS = {"groundstate": cmd_groundstate, "spectrum": cmd_spectrum, "construct": cmd_construct,
            "evolve": cmd_evolve, "classify": cmd_classify, "diagnose": cmd_diagnose, "sweep": cmd_sweep}


def _exit_code(exc):
    if isinstance(exc, StageFailure):
        return _exit_code(exc.cause)
    if isinstance(exc, (InvalidArgument, CheckpointError, PreconditionViolation)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    np.seterr(over="ignore", invalid="ignore")
    try:
        code = COMMANDS[args.command](args)
    except ThresholdNLSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK if code is None else code
