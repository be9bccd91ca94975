"""Command-line entry point: run one experiment from a config file.

    oy <experiment> --config FILE [--seed N] [--workers K] [--out DIR]

Exit code 0 iff every gated metric passes; the JSON report and CSV artifacts
land in the output directory.  OY_SEED and OY_WORKERS environment variables
override the config file; command-line flags override both.
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, load_config
from .errors import ConfigError
from .runner import run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oy",
        description="Reproducible verification experiments for the semi-discrete "
                    "Brownian polymer and last-passage models.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS,
                        help="which experiment pipeline to run")
    parser.add_argument("--config", required=True, help="INI-style config file")
    parser.add_argument("--seed", type=int, default=None, help="override experiment.seed")
    parser.add_argument("--workers", type=int, default=None, help="override experiment.workers")
    parser.add_argument("--out", default=None, help="override output.dir")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, overrides={
            "seed": args.seed,
            "workers": args.workers,
            "out_dir": args.out,
        })
        if cfg.name != args.experiment:
            raise ConfigError(
                f"experiment.name: config says {cfg.name!r} but the command line "
                f"asked for {args.experiment!r}"
            )
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    path = report.write(cfg.out_dir)
    for line in report.summary_lines():
        print(line)
    print(f"report: {path} ({report.wallclock_s:.1f}s)")
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
