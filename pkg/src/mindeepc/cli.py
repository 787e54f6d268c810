"""Command-line entry point: ``mindeepc <command> [options]``.

Exit codes: 0 success, 1 a check suite failed, 2 configuration or I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex

EXIT_OK, EXIT_SUITE, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment YAML (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--variant", choices=("full", "reduced", "both"),
                        help="controller variant for run (overrides run.variant)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="mindeepc", description="Minimum-dimension DeePC experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("init", help="write a commented config template")
    p.add_argument("path", type=Path, nargs="?", default=Path("experiment.yaml"))
    p.add_argument("--force", action="store_true", help="overwrite an existing file")
    sub.add_parser("collect", parents=[common], help="simulate and store offline data")
    p = sub.add_parser("reduce", parents=[common], help="SVD-reduce the data library")
    p.add_argument("--data", type=Path, help="directory holding u_data.csv / y_data.csv")
    p = sub.add_parser("run", parents=[common], help="closed-loop DeePC")
    p.add_argument("--steps", type=int, help="override run.steps")
    p.add_argument("--truncate", action="store_true", help="add the column-truncation baseline")
    sub.add_parser("check", parents=[common], help="run the verification suites")
    sub.add_parser("bench", parents=[common], help="solve-time benchmark")
    return ap


def _load(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.load(args.config) if args.config else ex.ExperimentConfig.from_dict()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    run = {}
    if getattr(args, "steps", None) is not None:
        run["steps"] = args.steps
    if getattr(args, "truncate", False):
        run["truncation_baseline"] = True
    if run:
        over["run"] = run
    return cfg.replace(**over) if over else cfg


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "init":
            if args.path.exists() and not args.force:
                raise ex.ConfigError(f"{args.path} exists; pass --force to overwrite")
            ex.write_template(args.path)
            print(f"wrote {args.path}")
            return EXIT_OK
        cfg = _load(args)
        if args.command == "collect":
            man = ex.cmd_collect(cfg, args.out)
            print(f"collected T={man['T']} samples (m={man['m']}, p={man['p']}), "
                  f"plant {man['plant_digest']}, seed {man['seed']}")
        elif args.command == "reduce":
            s = ex.cmd_reduce(cfg, args.out, args.data)
            print(f"library {s['library_shape'][0]}x{s['library_shape'][1]} -> r = {s['rank']} "
                  f"({json.dumps(s['rule'])})")
        elif args.command == "run":
            s = ex.cmd_run(cfg, args.out, args.variant)
            if "table" in s:
                print(s["table"])
            else:
                for name, v in s["variants"].items():
                    print(f"{name}: dim {v['decision_dimension']}, cost {v['accumulated_cost']:.3f}, "
                          f"mean solve {v['mean_solve_ms']:.2f} ms")
        elif args.command == "check":
            rep = ex.cmd_check(cfg, args.out)
            for name, r in rep["suites"].items():
                print(f"{'PASS' if r['passed'] else 'FAIL'} {name}: {r['failures']}/{r['trials']} "
                      f"failures, worst {r['worst']:.3e} (tol {r['tolerance']:.1e})")
            return EXIT_OK if rep["passed"] else EXIT_SUITE
        elif args.command == "bench":
            rep = ex.cmd_bench(cfg, args.out)
            sc = rep["scenario"]
            print(f"full    dim {sc['full']['dimension']:4d}  mean {sc['full']['mean_ms']:.2f} ms  "
                  f"median {sc['full']['median_ms']:.2f}  p95 {sc['full']['p95_ms']:.2f}")
            print(f"reduced dim {sc['reduced']['dimension']:4d}  mean {sc['reduced']['mean_ms']:.2f} ms  "
                  f"median {sc['reduced']['median_ms']:.2f}  p95 {sc['reduced']['p95_ms']:.2f}")
            print(f"speedup {sc['speedup']:.2f}x")
            for fam in rep["synthetic"]:
                ratios = ", ".join(f"T={r['T']}: {r['time_ratio']:.2f}" for r in fam["rows"])
                print(f"n={fam['n']} m={fam['m']}: time ratio {ratios}")
    except (ex.ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
