"""Command-line entry point: ``rough-euler <subcommand> ...``."""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .fileio import (ConfigError, ExperimentConfig, SnapshotFormatError, config_to_dict,
                     emit_snapshot, json_default, lift_path, load_config, write_diagnostics_csv,
                     write_table_csv)
from .lagrangian import LagrangianError
from .rough_path import RoughPathError
from .solver import SolverError, run

log = logging.getLogger("rough_euler")

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_BLOWUP = 4

SUBCOMMANDS = ("simulate", "wong-zakai", "order-test", "cont-dep", "invariants", "lift-path")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rough-euler", description="Rough 2D Euler solver and studies.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS[:-1]:
        s = sub.add_parser(name)
        s.add_argument("config", type=Path, help="JSON configuration")
        s.add_argument("-o", "--out", type=Path, default=Path("runs"), help="parent output directory")
        s.add_argument("--seed", type=int, default=None, help="override the driver seed")
        s.add_argument("--no-timestamp", action="store_true",
                       help="write into --out itself instead of a timestamped subdirectory")
    s = sub.add_parser("lift-path")
    s.add_argument("input", type=Path, help="path CSV with columns t,z_1..z_K")
    s.add_argument("output", type=Path, help="lift CSV to write")
    s.add_argument("--verify", action="store_true", help="append Chen and geometricity defect columns")
    return p


def _outdir(args, name: str) -> Path:
    if args.no_timestamp:
        out = args.out
    else:
        stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
        out = args.out / f"{name}-{stamp}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _with_seed(cfg, seed):
    if seed is None:
        return cfg
    solver = cfg.solver if isinstance(cfg, ExperimentConfig) else cfg
    drv = dict(solver.driver)
    if "seed" in drv:
        drv["seed"] = seed
    solver = replace(solver, driver=drv)
    if isinstance(cfg, ExperimentConfig):
        params = dict(cfg.params)
        params["seeds"] = [seed]
        return ExperimentConfig(solver, params)
    return solver


def _simulate(cfg, out: Path) -> int:
    res = run(cfg)
    write_diagnostics_csv(res.diagnostics, out / "diagnostics.csv")
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    rows = []
    for k, (t, w) in enumerate(res.snapshots):
        name = f"vorticity_{k:05d}.rge2"
        emit_snapshot(w, snaps / name)
        rows.append([k, float(t), name])
    write_table_csv(["index", "t", "file"], rows, snaps / "index.csv")
    summary = {
        "experiment": "simulate",
        "t_final": res.state.t,
        "steps": res.state.steps,
        "blowup": res.blowup,
        "passed": res.blowup is None,
    }
    (out / "report.json").write_text(json.dumps(summary, indent=2, default=json_default) + "\n")
    if res.blowup is not None:
        log.error("blow-up: %s", res.blowup)
        return EXIT_BLOWUP
    return EXIT_OK


def _experiment(name: str, cfg) -> ex.ExperimentReport:
    if isinstance(cfg, ExperimentConfig):
        solver, params = cfg.solver, cfg.params
    else:
        solver, params = cfg, {}
    if name == "wong-zakai":
        seeds = params.get("seeds")
        if seeds is None:
            seeds = [int(solver.driver.get("seed", 0))]
        kw = {k: params[k] for k in ("n_min", "n_max", "grid_extra") if k in params}
        if len(seeds) == 1:
            return ex.wong_zakai(solver, seed=int(seeds[0]), **kw)
        return ex.wong_zakai_ensemble(solver, seeds, min_pass=params.get("min_pass"), **kw)
    if name == "order-test":
        kw = {k: params[k] for k in ("h0", "refinements", "substeps") if k in params}
        return ex.local_order_test(solver, **kw)
    if name == "cont-dep":
        kw = {k: params[k] for k in ("eps", "bump_seed", "bump_kmax") if k in params}
        return ex.continuous_dependence(solver, **kw)
    if name == "invariants":
        kw = {k: params[k] for k in ("pushforward", "lattice") if k in params}
        return ex.invariant_suite(solver, **kw)
    raise ValueError(name)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "lift-path":
            code = lift_path(args.input, args.output, verify=args.verify)
            if code:
                log.error("defect above tolerance in %s", args.output)
            return code
        cfg = _with_seed(load_config(args.config), args.seed)
        out = _outdir(args, args.command)
        (out / "config.json").write_text(json.dumps(config_to_dict(cfg), indent=2, default=json_default) + "\n")
        if args.command == "simulate":
            solver = cfg.solver if isinstance(cfg, ExperimentConfig) else cfg
            return _simulate(solver, out)
        report = _experiment(args.command, cfg)
        report.write(out)
        for key, c in report.criteria.items():
            print(f"{'PASS' if c['passed'] else 'FAIL'} {key}: {c['value']}")
        return EXIT_OK if report.passed else EXIT_ASSERTION
    except (ConfigError, json.JSONDecodeError) as exc:
        log.error("config error: %s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, SnapshotFormatError, RoughPathError, LagrangianError) as exc:
        print(f"input/output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
