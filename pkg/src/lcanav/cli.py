"""``lcanav`` command line: plan, run, bench, export.

Exit codes (stable):

====  =====================================================================
0     success (run: goal reached)
2     bad input: config parse error, unreadable library, Ts/T or goal
      mismatch between library and config, invalid scenario, trials < 1,
      usage errors
3     plan: no path converged; export: library has no entries
4     run: collided
5     run: timeout
====  =====================================================================
"""

import argparse
import logging
import os
import sys
import time

from . import config as cfgmod
from .libio import LibraryFormatError, read_library, write_library
from .sim import format_table_csv, format_table_text, run_benchmark, run_episode
from .trajopt import NoConvergedPathError, build_library

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_PATHS = 3
EXIT_COLLIDED = 4
EXIT_TIMEOUT = 5

log = logging.getLogger("lcanav")


class CliError(Exception):
    def __init__(self, msg, code=EXIT_INPUT):
        super().__init__(msg)
        self.code = code


def _load_config(path):
    if path is None:
        return cfgmod.Config()
    try:
        return cfgmod.load(path)
    except cfgmod.ConfigError as e:
        raise CliError(f"config error: {e}") from None


def _load_library(path):
    if path is None:
        raise CliError("--library is required")
    try:
        return read_library(path)
    except LibraryFormatError as e:
        raise CliError(str(e)) from None


def _check_compatible(cfg, lib):
    if lib.Ts != cfg.planner.Ts or lib.T != cfg.planner.T:
        raise CliError(f"library was planned with Ts={lib.Ts}, T={lib.T} but the config has "
                       f"Ts={cfg.planner.Ts}, T={cfg.planner.T}")
    if tuple(lib.goal[:2]) != tuple(cfg.scenario.goal[:2]):
        raise CliError(f"library goal {tuple(lib.goal[:2])} differs from the scenario goal "
                       f"{tuple(cfg.scenario.goal[:2])}")
    if not lib.converged_indices():
        raise CliError("library has no converged path")


def _scenario(cfg):
    sc = cfg.scenario.build()
    try:
        sc.validate()
    except ValueError as e:
        raise CliError(f"invalid scenario: {e}") from None
    return sc


def cmd_plan(args):
    cfg = _load_config(args.config)
    if args.out is None:
        raise CliError("--out is required")
    sc = _scenario(cfg)
    t0 = time.perf_counter()
    try:
        lib = build_library(sc.start, sc.goal, cfg.planner, cfg.bounds)
        code = EXIT_OK
    except NoConvergedPathError as e:
        lib = e.library
        code = EXIT_NO_PATHS
    total = time.perf_counter() - t0
    for e in lib.entries:
        state = "converged" if e.converged else "NOT converged"
        print(f"path {e.path_index} (offset {e.offset:+.2f} m): {state} after {e.iterations} iterations, "
              f"primal {e.primal_res:.2e}, dual {e.dual_res:.2e}, {e.wall_time:.3f} s")
    print(f"{len(lib.converged_indices())}/{len(lib)} paths converged in {total:.3f} s")
    if code == EXIT_NO_PATHS:
        print("error: no path converged; library not written", file=sys.stderr)
        return code
    write_library(lib, args.out)
    print(f"library written to {args.out}")
    return code


def cmd_run(args):
    cfg = _load_config(args.config)
    lib = _load_library(args.library)
    _check_compatible(cfg, lib)
    sc = _scenario(cfg)
    res = run_episode(sc, args.controller, lib, cfg.filter_params(), cfg.nav_params())
    if args.out:
        res.trace.to_csv(args.out)
    m = res.metrics
    print(f"outcome: {res.outcome} after {res.trace.records[-1].t:.2f} s")
    for name, v in zip(("qp_failures", "safety_pct", "success_pct", "v_bar", "omega_bar", "e_v", "e_omega"),
                       m.row()):
        print(f"  {name}: {v}")
    return {"reached": EXIT_OK, "collided": EXIT_COLLIDED, "timeout": EXIT_TIMEOUT}[res.outcome]


def cmd_bench(args):
    if args.trials < 1:
        raise CliError("--trials must be >= 1")
    cfg = _load_config(args.config)
    lib = _load_library(args.library)
    _check_compatible(cfg, lib)
    sc = _scenario(cfg)
    seed = cfg.scenario.seed if args.seed is None else args.seed
    table, results = run_benchmark(sc, lib, trials=args.trials, seed=seed,
                                   params=cfg.filter_params(), nav_params=cfg.nav_params())
    text = format_table_text(table)
    print(text, end="")
    if args.out:
        os.makedirs(os.path.join(args.out, "traces"), exist_ok=True)
        with open(os.path.join(args.out, "table.csv"), "w", newline="") as f:
            f.write(format_table_csv(table))
        with open(os.path.join(args.out, "table.txt"), "w") as f:
            f.write(text)
        for c, runs in results.items():
            for k, r in enumerate(runs):
                r.trace.to_csv(os.path.join(args.out, "traces", f"{c}_{k}.csv"))
    return EXIT_OK


def cmd_export(args):
    lib = _load_library(args.library)
    if len(lib) == 0:
        print("error: library has no paths", file=sys.stderr)
        return EXIT_NO_PATHS
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    for e in lib.entries:
        with open(os.path.join(out, f"path_{e.path_index}.csv"), "w", newline="") as f:
            f.write("k,t,px,py,theta,converged\n")
            for k, x in enumerate(e.x_star):
                f.write(f"{k},{k * lib.Ts!r},{float(x[0])!r},{float(x[1])!r},{float(x[2])!r},"
                        f"{int(e.converged)}\n")
    with open(os.path.join(out, "waypoints.csv"), "w", newline="") as f:
        f.write("path,index,x,y\n")
        for e in lib.entries:
            for k, w in enumerate(e.waypoints):
                f.write(f"{e.path_index},{k},{float(w[0])!r},{float(w[1])!r}\n")
    print(f"exported {len(lib)} paths to {out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="lcanav", description="Layered path-library navigation with MCBF safety filtering.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", help="build and save the offline path library")
    sp.add_argument("--config")
    sp.add_argument("--out", help="library JSON path")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("run", help="simulate one episode")
    sp.add_argument("--config")
    sp.add_argument("--library")
    sp.add_argument("--controller", choices=("mcbf", "cbf"), default="mcbf")
    sp.add_argument("--out", help="trace CSV path")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("bench", help="run both controllers over seeded starts")
    sp.add_argument("--config")
    sp.add_argument("--library")
    sp.add_argument("--trials", type=int, default=5)
    sp.add_argument("--seed", type=int, help="defaults to scenario.seed")
    sp.add_argument("--out", help="directory for table.csv, table.txt and traces/")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("export", help="dump library paths and waypoints as CSV")
    sp.add_argument("--library")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors already; keep --help at 0
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
