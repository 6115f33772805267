"""Command-line front end.

    vmint run <config> [--seed S] [--workers N] [--out DIR]
    vmint verify <suite> [--seed S] [--workers N]
    vmint kernel inspect <spec>
    vmint plot-data <records.csv> --kind <kind> [--out FILE]

Exit codes: 0 all verdicts/criteria pass, 1 at least one fails,
2 configuration or runtime error.  VMINT_WORKERS sets the default worker
count when --workers is not given (CLI flag > env > config > 1).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path


def _workers_from_env() -> int | None:
    raw = os.environ.get("VMINT_WORKERS")
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise SystemExit(f"VMINT_WORKERS must be an integer, got {raw!r}")
    if value < 1:
        raise SystemExit("VMINT_WORKERS must be >= 1")
    return value


def _cmd_run(args) -> int:
    from vmint.harness import (
        ConfigError,
        apply_overrides,
        parse_config,
        run_all,
        verdict_passes,
    )
    from vmint.experiments import ReplicateError

    workers = args.workers if args.workers is not None else _workers_from_env()
    try:
        config = parse_config(args.config)
        config = apply_overrides(config, seed=args.seed, workers=workers,
                                 out=args.out)
        records = run_all(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ReplicateError as exc:
        print(f"replicate failure: {exc}", file=sys.stderr)
        return 2
    if not records:
        print("no experiments configured; nothing to do")
        return 0
    failed = 0
    for rec in records:
        ok = verdict_passes(rec.verdict)
        failed += not ok
        mark = "PASS" if ok else "FAIL"
        print(f"{rec.experiment}: {mark}  verdict={rec.verdict!r}  "
              f"censored={rec.censored}  {rec.duration_seconds:.1f}s")
    print(f"run {'PASS' if failed == 0 else 'FAIL'}  "
          f"({len(records) - failed}/{len(records)} verdicts pass, "
          f"config {records[0].config_hash}, outputs in {config.output_dir})")
    return 0 if failed == 0 else 1


def _cmd_verify(args) -> int:
    from vmint.acceptance import ACCEPTANCE_SEED, run_suite

    workers = args.workers if args.workers is not None else _workers_from_env()
    seed = ACCEPTANCE_SEED if args.seed is None else args.seed
    try:
        results = run_suite(args.suite, seed=seed, workers=workers or 1)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    for res in results:
        print(res.line())
    n_pass = sum(r.passed for r in results)
    print(f"suite {args.suite!r}: {n_pass}/{len(results)} criteria pass "
          f"(seed {seed})")
    return 0 if n_pass == len(results) else 1


def _cmd_kernel(args) -> int:
    from vmint.kernels import build_kernel, moment, parse_kernel_spec, tail_mass

    try:
        kernel = build_kernel(parse_kernel_spec(args.spec))
    except ValueError as exc:
        print(f"bad kernel spec: {exc}", file=sys.stderr)
        return 2
    print(f"family:        {kernel.family}")
    print(f"support:       {kernel.sites.size} sites, radius {kernel.radius}")
    print(f"mean:          {kernel.mean():.6g}")
    print(f"second moment: {moment(kernel, 2):.6g}")
    levels = []
    m = 1
    while m <= kernel.radius:
        levels.append(m)
        m *= 4
    tails = "  ".join(
        f"m={m}: {tail_mass(kernel, m, 'two'):.3e}" for m in levels)
    print(f"tail mass >= m (two-sided):  {tails}")
    return 0


def _cmd_plot_data(args) -> int:
    from vmint.harness import emit_plot_data

    path = Path(args.records)
    if not path.exists():
        print(f"records file not found: {path}", file=sys.stderr)
        return 2
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        text = emit_plot_data(rows, args.kind)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmint",
        description="simulation lab for the voter-model interface")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--out", default=None, help="override output_dir")
    p_run.set_defaults(handler=_cmd_run)

    p_ver = sub.add_parser("verify", help="run a built-in acceptance suite")
    p_ver.add_argument("suite",
                       help="acceptance | fast | walks | duality | "
                            "dichotomy | a criterion number 1-11")
    p_ver.add_argument("--seed", type=int, default=None)
    p_ver.add_argument("--workers", type=int, default=None)
    p_ver.set_defaults(handler=_cmd_verify)

    p_ker = sub.add_parser("kernel", help="kernel utilities")
    ker_sub = p_ker.add_subparsers(dest="kernel_command", required=True)
    p_ins = ker_sub.add_parser("inspect", help="print moments and tails")
    p_ins.add_argument("spec", help="e.g. 'power_law(1.2, 100000)'")
    p_ins.set_defaults(handler=_cmd_kernel)

    p_plot = sub.add_parser("plot-data",
                            help="reshape an experiment CSV for plotting")
    p_plot.add_argument("records", help="CSV written by vmint run")
    p_plot.add_argument("--kind", required=True,
                        help="tightness | density | schedule")
    p_plot.add_argument("--out", default=None)
    p_plot.set_defaults(handler=_cmd_plot_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
