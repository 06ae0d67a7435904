"""``kptrack`` command line: generate synthetic runs, evaluate them, aggregate reports.

Exit codes: 0 success, 1 I/O failure, 2 configuration or validation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path
from typing import Sequence

from . import pipeline
from .config import load_config
from .errors import ConfigError, DataError, OutOfDomainWarning

log = logging.getLogger("kptrack")

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kptrack", description="Keypoint tracking evaluation toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write synthetic episode files and run manifests")
    gen.add_argument("--config", type=Path, help="YAML/JSON config (defaults used if omitted)")
    gen.add_argument("--out", type=Path, required=True, help="output directory")
    gen.add_argument("--seed", type=int, help="override simulation.seed")

    ev = sub.add_parser("evaluate", help="score every epoch snapshot of one run")
    ev.add_argument("--run", type=Path, required=True, help="run manifest JSON")
    ev.add_argument("--config", type=Path, help="YAML/JSON config (defaults used if omitted)")
    ev.add_argument("--out", type=Path, required=True, help="output directory")
    ev.add_argument("--normalization", choices=["sum", "mean"], help="override evaluation.normalization")
    ev.add_argument("--fit-split", choices=["shared", "disjoint"], help="override evaluation.fit_split")

    agg = sub.add_parser("aggregate", help="combine run reports into statistics tables")
    agg.add_argument("--config", type=Path, help="YAML/JSON config (defaults used if omitted)")
    agg.add_argument("--out", type=Path, required=True, help="output directory")
    agg.add_argument("reports", nargs="+", type=Path, help="*.report.json files from 'evaluate'")
    return parser


def _run(args: argparse.Namespace) -> None:
    config = load_config(args.config)
    if args.command == "generate":
        manifests = pipeline.generate(config, args.out, seed=args.seed)
        for path in manifests:
            print(path)
    elif args.command == "evaluate":
        overrides = {}
        if args.normalization:
            overrides["normalization"] = args.normalization
        if args.fit_split:
            overrides["fit_split"] = args.fit_split
        cfg = config.evaluation.model_copy(update=overrides)
        for path in pipeline.evaluate(args.run, cfg, args.out):
            print(path)
    elif args.command == "aggregate":
        for path in pipeline.aggregate(args.reports, config.evaluation, args.out):
            print(path)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", OutOfDomainWarning)
    try:
        _run(args)
    except (ConfigError, DataError) as exc:
        print(f"kptrack: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"kptrack: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
