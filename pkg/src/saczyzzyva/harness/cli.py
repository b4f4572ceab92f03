"""Command line: ``run``, ``sweep``, ``check`` and ``region``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..feasibility import region_csv
from ..scenario import ConfigError
from ..simnet import Transcript
from .config import load_config, sweep_configs
from .invariants import check_invariants
from .metrics import metrics_csv
from .runner import run_many, run_scenario


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _report(results, out: str | None) -> int:
    bad = 0
    for r in results:
        m = r.metrics
        status = "ok" if not r.violations else f"{len(r.violations)} violation(s)"
        print(
            f"{r.config.name or 'scenario'}: completed {m.completed} requests, median latency "
            f"{m.median_latency}, {m.total_messages} messages, {m.fallbacks} fallbacks, "
            f"{m.view_changes} view changes: {status}",
            file=sys.stderr,
        )
        for v in r.violations[:20]:
            print(f"  {v}", file=sys.stderr)
        bad += bool(r.violations)
    _emit(metrics_csv([r.transcript for r in results]), out)
    return 1 if bad else 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    result = run_scenario(cfg)
    if args.transcript:
        result.transcript.write(args.transcript)
    return _report([result], args.out)


def cmd_sweep(args: argparse.Namespace) -> int:
    template = load_config(args.template)
    configs = sweep_configs(template, args.param, seed=args.seed)
    results = run_many(configs, jobs=args.jobs)
    if args.transcript:
        base = Path(args.transcript)
        base.mkdir(parents=True, exist_ok=True)
        for i, r in enumerate(results):
            r.transcript.write(base / f"run-{i:03d}.jsonl")
    return _report(results, args.out)


def cmd_check(args: argparse.Namespace) -> int:
    violations = check_invariants(Transcript.load(args.transcript))
    for v in violations:
        print(v)
    print(f"{len(violations)} violation(s)", file=sys.stderr)
    return 1 if violations else 0


def cmd_region(args: argparse.Namespace) -> int:
    _emit(region_csv(args.max_n, brute_force=args.brute_force), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="saczyzzyva", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario file")
    run.add_argument("config")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a scenario template over parameter ranges")
    sweep.add_argument("template")
    sweep.add_argument("--param", action="append", default=[], help="e.g. f=1..5 or variant=saczyzzyva,zyzzyva5")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.set_defaults(func=cmd_sweep)

    for sp in (run, sweep):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", help="write the metrics CSV here instead of stdout")
        sp.add_argument("--transcript", help="write the JSONL transcript(s) here")

    check = sub.add_parser("check", help="check a JSONL transcript against the invariants")
    check.add_argument("transcript")
    check.set_defaults(func=cmd_check)

    region = sub.add_parser("region", help="print the (n, b) -> max f feasibility table as CSV")
    region.add_argument("--max-n", type=int, default=9)
    region.add_argument("--brute-force", action="store_true", help="derive the table by exhaustive search")
    region.add_argument("--out")
    region.set_defaults(func=cmd_region)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
