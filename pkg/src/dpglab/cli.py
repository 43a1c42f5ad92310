"""Command line interface: ``dpg run`` and ``dpg diag``.

Exit codes: 0 success, 2 solver or assembly failure, 3 invalid configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from dpglab import kernels
from dpglab.dpg_core import Config, ConfigError
from dpglab.harness import LevelError, REFINE_MODES, diag_csv, mesh_sequence, run_convergence, run_diagnostics
from dpglab.norms import DENSE_DOF_LIMIT, SIGMA_NORM_MODES, TraceRangeError
from dpglab.problems import load_problem
from dpglab.solver import SolveOptions, SolverError

EXIT_OK = 0
EXIT_SOLVER = 2
EXIT_CONFIG = 3

log = logging.getLogger("dpglab")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="convergence study for a manufactured solution")
    run.add_argument("--solution", default="sinsin", choices=["sinsin", "bubble4", "zero", "custom"])
    run.add_argument("--custom-file", help="JSON file {\"u\": \"<sympy expression in x, y>\"}")
    run.add_argument("--p", type=int, default=1)
    run.add_argument("--r-offset", type=int, default=2, help="scalar test degree r = p + offset")
    run.add_argument("--n0", type=int, default=2, help="base mesh subdivisions per side")
    run.add_argument("--levels", type=int, default=5)
    run.add_argument("--refine", choices=REFINE_MODES, default="uniform")
    run.add_argument("--solver", choices=["direct", "cg", "auto"], default="direct")
    run.add_argument("--tol", type=float, default=1e-12)
    run.add_argument("--no-timings", action="store_true", help="write 0.0 in the seconds column")
    run.add_argument("--out", default="report")

    diag = sub.add_parser("diag", help="inf-sup and boundedness estimates over uniform levels")
    diag.add_argument("--p", type=int, nargs="+", default=[0])
    diag.add_argument("--r-offset", type=int, default=2)
    diag.add_argument("--n0", type=int, default=1)
    diag.add_argument("--levels", type=int, default=4)
    diag.add_argument("--sigma-norm", choices=SIGMA_NORM_MODES, default="surrogate")
    diag.add_argument("--max-dofs", type=int, default=DENSE_DOF_LIMIT)
    diag.add_argument("--out", default="diag")
    return parser


def _config(p, offset):
    if offset < 2:
        raise ConfigError(f"--r-offset must be >= 2 (got {offset})")
    return Config(p, p + offset)


def _run(args) -> int:
    if args.n0 < 1:
        raise ConfigError("--n0 must be >= 1")
    if args.levels < 2:
        raise ConfigError("--levels must be >= 2")
    config = _config(args.p, args.r_offset)
    try:
        opts = SolveOptions(args.solver, args.tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    problem = load_problem(args.solution, args.custom_file)
    report = run_convergence(
        problem, config, args.levels, args.refine, args.n0, opts, timings=not args.no_timings
    )
    csv_path, json_path = report.write(args.out)
    for r in report.records:
        rate = "" if r.rate is None else f"{r.rate:.3f}"
        log.info("level %d N=%d error_u=%.3e rate=%s", r.level, r.N, r.error_u, rate)
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


def _diag(args) -> int:
    if args.n0 < 1 or args.levels < 1:
        raise ConfigError("--n0 and --levels must be >= 1")
    all_reports, all_skipped = [], []
    for p in args.p:
        config = _config(p, args.r_offset)
        meshes = [
            (f"unit_square n0={args.n0} level={lev} uniform", m)
            for lev, m in mesh_sequence(args.n0, args.levels, "uniform")
        ]
        reports, skipped = run_diagnostics(config, meshes, args.sigma_norm, args.max_dofs)
        for s in skipped:
            s["p"] = p
            log.warning("skipped %s: %s", s["mesh"], s["error"])
        all_reports += reports
        all_skipped += skipped
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.with_name(out.name + ".csv").write_text(diag_csv(all_reports))
    payload = {"reports": [r.to_dict() for r in all_reports], "skipped": all_skipped}
    out.with_name(out.name + ".json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"wrote {out}.csv and {out}.json")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    log.debug("kernel backend: %s", kernels.BACKEND)
    try:
        return _run(args) if args.command == "run" else _diag(args)
    except ConfigError as exc:
        print(f"dpg: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LevelError as exc:
        cause = exc.__cause__
        if isinstance(cause, ConfigError):
            print(f"dpg: invalid configuration: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"dpg: solver failure at {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SolverError, kernels.LocalFactorizationError, TraceRangeError) as exc:
        print(f"dpg: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
