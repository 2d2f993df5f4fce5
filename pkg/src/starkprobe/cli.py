"""Command line entry point: ``stark <subcommand> [--config FILE] [--out DIR] ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import FIGURES, ConfigError, Scenario, parse_config
from .report import NothingToReport, emit_report
from .runner import run_scenario

SUBCOMMANDS = {
    "spectrum": Scenario.SPECTRUM,
    "qfi-sweep": Scenario.QFI_SWEEP,
    "qfi-matrix": Scenario.QFI_MATRIX,
    "cfi-sweep": Scenario.CFI_SWEEP,
    "gap-sweep": Scenario.GAP_SWEEP,
    "collapse": Scenario.COLLAPSE,
    "fit-beta-gamma": Scenario.BETA_GAMMA,
    "multiparam-trace": Scenario.MULTIPARAM_TRACE,
}

EXIT_OK, EXIT_CONFIG, EXIT_NOTHING, EXIT_SOLVER = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    p.add_argument("--quick", action="store_true", help="halve grid densities and cap sizes")
    p.add_argument("--full", action="store_true", help="include the largest many-body size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stark", description="Stark-probe sweeps, fits and figure recipes.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        _common(sub.add_parser(name, help=f"run a {name} scenario"))
    rp = sub.add_parser("reproduce", help="run a figure recipe")
    rp.add_argument("figure", choices=FIGURES)
    _common(rp)
    rep = sub.add_parser("report", help="summarise finished outputs")
    rep.add_argument("--out", required=True, help="directory holding run outputs")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        try:
            text, _ = emit_report(args.out)
        except NothingToReport as exc:
            print(exc, file=sys.stderr)
            return EXIT_NOTHING
        sys.stdout.write(text)
        return EXIT_OK

    overrides = {
        "out": args.out,
        "workers": args.workers,
        "seed": args.seed,
        "quick": True if args.quick else None,
        "full": True if args.full else None,
    }
    if args.command == "reproduce":
        text = args.config.read_text() if args.config else ""
        overrides.update(scenario=Scenario.REPRODUCE, figure=args.figure)
    elif args.config is None:
        print(f"{args.command} needs --config", file=sys.stderr)
        return EXIT_CONFIG
    else:
        text = args.config.read_text()
    try:
        cfg = parse_config(text, **overrides)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    expected = Scenario.REPRODUCE if args.command == "reproduce" else SUBCOMMANDS[args.command]
    if cfg.scenario is not expected:
        print(f"config error: scenario {cfg.scenario.value!r} does not match subcommand {args.command!r}", file=sys.stderr)
        return EXIT_CONFIG
    summary = run_scenario(cfg)
    total = summary.computed + summary.skipped
    if total == 0 and not summary.files:
        print("nothing to do", file=sys.stderr)
        return EXIT_NOTHING
    print(f"computed {summary.computed} points, reused {summary.skipped}, "
          f"{summary.failures} solver failures; wrote {len(summary.files)} files under {cfg.out}")
    return summary.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
