"""Command-line experiment runner.

Subcommands: run a configured sweep, summarize a results CSV into pattern
gaps, or validate a config file without running anything. Exit codes: 0 on
success, 1 for validation problems, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from .experiment import ValidationError, load_config, run_experiment, summarize


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="passive6dma",
        description="Sum-rate experiments for position- and rotation-"
                    "adjustable reflecting surfaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser(
        "run", help="run the configured sweep; writes CSV, metadata and figures"
    )
    run_p.add_argument("--config", required=True, help="experiment config (JSON)")
    run_p.add_argument("--out", default="out", help="output directory (default: out)")
    run_p.add_argument("--jobs", type=int, default=1,
                       help="worker processes; output is identical for any value")

    sum_p = sub.add_parser(
        "summarize", help="print isotropic-minus-directive gaps from a results CSV"
    )
    sum_p.add_argument("--in", dest="in_path", required=True,
                       help="CSV written by the run subcommand")

    val_p = sub.add_parser("validate", help="check a config file and exit")
    val_p.add_argument("--config", required=True, help="experiment config (JSON)")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.jobs < 1:
        raise ValidationError(f"--jobs: must be >= 1, got {args.jobs}")
    output = run_experiment(config, args.out, jobs=args.jobs)
    print(f"wrote {output.csv_path}")
    print(f"wrote {output.metadata_path}")
    for path in output.figure_paths:
        print(f"wrote {path}")
    return 0


def _cmd_summarize(args) -> int:
    gaps = summarize(args.in_path)
    print("scheme,power_dbm,gap_bps_hz")
    for gap in gaps:
        print(f"{gap['scheme']},{gap['power_dbm']:g},{gap['gap_bps_hz']:.12g}")
    return 0


def _cmd_validate(args) -> int:
    load_config(args.config)
    print(f"{args.config}: valid")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "summarize": _cmd_summarize,
                "validate": _cmd_validate}
    try:
        return handlers[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
