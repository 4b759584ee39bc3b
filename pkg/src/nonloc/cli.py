"""Command-line entry point.

    nonloc simulate CFG [CFG ...] [--out-dir D] [--dump-fields]
                    [--sample-every N] [--jobs N]
    nonloc check CFG
    nonloc dispersion --E E --V0 V0 --beta B [--m M] [--hbar H]

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
The NONLOC_LOG environment variable sets the log level (e.g. DEBUG, INFO).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import ConfigError, NonlocError, SolverError
from .potentials import dispersion_solve
from .scenario import check_scenario, parse_config, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _setup_logging():
    level_name = os.environ.get("NONLOC_LOG", "WARNING").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _error_json(kind: str, exc: Exception) -> str:
    return json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonloc",
        description="Non-local potential wavefunction evolution and continuity diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one or more scenario configs")
    sim.add_argument("configs", nargs="+", help="scenario YAML file(s)")
    sim.add_argument("--out-dir", default=None, help="output directory (per scenario)")
    sim.add_argument("--dump-fields", action="store_true", default=None,
                     help="also dump full-field CSV snapshots")
    sim.add_argument("--sample-every", type=int, default=None, metavar="N",
                     help="override the config's sampling stride")
    sim.add_argument("--jobs", type=int, default=1, metavar="N",
                     help="run multiple configs in N parallel processes")

    chk = sub.add_parser("check", help="validate a config without running it")
    chk.add_argument("config", help="scenario YAML file")

    disp = sub.add_parser("dispersion", help="roots of E = (hbar k)^2/2m + V0 exp(-k^2 beta^2/4)")
    disp.add_argument("--E", type=float, required=True)
    disp.add_argument("--V0", type=float, required=True)
    disp.add_argument("--beta", type=float, required=True)
    disp.add_argument("--m", type=float, default=1.0)
    disp.add_argument("--hbar", type=float, default=1.0)
    return parser


def _resolve_out_dir(base: str | None, cfg_path: str, multi: bool) -> str | None:
    if base is None:
        return None
    if multi:
        return str(Path(base) / Path(cfg_path).stem)
    return base


def _simulate_one(cfg_path: str, out_dir: str | None, dump_fields: bool | None,
                  sample_every: int | None) -> int:
    try:
        cfg = parse_config(cfg_path)
    except (ConfigError, ValueError) as exc:
        print(_error_json("config", exc), file=sys.stderr)
        return EXIT_CONFIG
    try:
        run_scenario(cfg, out_dir=out_dir, dump_fields=dump_fields,
                     sample_every=sample_every)
    except (SolverError, FloatingPointError) as exc:
        print(_error_json("numerical", exc), file=sys.stderr)
        return EXIT_NUMERICAL
    except NonlocError as exc:
        print(_error_json("config", exc), file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_simulate(args) -> int:
    multi = len(args.configs) > 1
    jobs = [(c, _resolve_out_dir(args.out_dir, c, multi), args.dump_fields,
             args.sample_every) for c in args.configs]
    if args.jobs > 1 and multi:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_simulate_worker, jobs))
        return max(codes)
    return max(_simulate_one(*job) for job in jobs)


def _simulate_worker(job) -> int:
    _setup_logging()
    return _simulate_one(*job)


def cmd_check(args) -> int:
    try:
        cfg = parse_config(args.config)
        report = check_scenario(cfg)
    except (ConfigError, ValueError) as exc:
        print(_error_json("config", exc), file=sys.stderr)
        return EXIT_CONFIG
    print("OK")
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_dispersion(args) -> int:
    try:
        roots = dispersion_solve(args.E, args.V0, args.beta, m=args.m, hbar=args.hbar)
    except (ConfigError, ValueError) as exc:
        print(_error_json("config", exc), file=sys.stderr)
        return EXIT_CONFIG
    print("E,k_root")
    for k in roots:
        print(f"{args.E:.17g},{k:.17g}")
    return EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return cmd_simulate(args)
    if args.command == "check":
        return cmd_check(args)
    if args.command == "dispersion":
        return cmd_dispersion(args)
    raise AssertionError(f"unhandled command {args.command!r}")  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
