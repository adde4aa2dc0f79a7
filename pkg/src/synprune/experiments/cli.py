"""
Command-line entry point: synprune {distill,prune,analyze,compare,sweep}

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 missing artifact.
"""

import argparse
import logging
import sys
from typing import List, Optional

from ..exceptions import (
    ConfigError,
    DatasetFormatError,
    InvalidParameterError,
    MissingArtifactError,
    NumericFailureError,
)
from .models import apply_overrides, load_config
from .runner import ANALYSES, cmd_analyze, cmd_compare, cmd_distill, cmd_prune, cmd_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_MISSING = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synprune",
        description="Distilled pruning experiments: distill -> prune -> analyze -> compare",
    )
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, help="YAML or JSON config merged over the packaged defaults")
        p.add_argument("--out-dir", default="runs", help="directory for run directories and the ledger")

    p = sub.add_parser("distill", help="distill the real training set into a synthetic set")
    common(p)
    p.add_argument("--resume", action="store_true", help="reuse a saved teacher bank")

    p = sub.add_parser("prune", help="run IMP, distilled or combined pruning")
    common(p)
    p.add_argument("--method", choices=["imp", "distilled", "combined"], default=None)
    p.add_argument("--rewind-epoch", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--syn-iters", type=int, default=None)
    p.add_argument("--synthetic", default=None, help="synthetic set directory written by `distill`")
    p.add_argument("--resume", action="store_true", help="continue a partially written record")

    p = sub.add_parser("analyze", help="LMC / landscape / Hessian analyses of a pruning record")
    common(p)
    p.add_argument("--record", required=True, help="prune run directory")
    p.add_argument("--analyses", nargs="+", choices=list(ANALYSES), default=None)

    p = sub.add_parser("compare", help="performance and stability ratios of two analyzed runs")
    p.add_argument("--syn-run", required=True, help="analyzed distilled / combined run directory")
    p.add_argument("--imp-run", required=True, help="analyzed IMP run directory")
    p.add_argument("--out-dir", default="runs")

    p = sub.add_parser("sweep", help="prune + analyze once per seed in independent processes")
    common(p)
    p.add_argument("--seeds", type=int, nargs="+", required=True)
    p.add_argument("--analyses", nargs="+", choices=list(ANALYSES), default=None)
    return parser


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stdout,
        force=True,
    )


def run(args: argparse.Namespace) -> int:
    if args.command == "compare":
        cmd_compare(args.syn_run, args.imp_run, args.out_dir)
        return EXIT_OK
    if args.command == "sweep":
        code, _ = cmd_sweep(args.config, args.seeds, args.out_dir, analyses=args.analyses, verbose=args.verbose)
        return code

    config = load_config(args.config)
    if args.command == "distill":
        cmd_distill(config, args.out_dir, resume=args.resume)
    elif args.command == "prune":
        config = apply_overrides(config, "prune", {
            "method": args.method,
            "rewind_epoch": args.rewind_epoch,
            "iterations": args.iterations,
            "syn_iters": args.syn_iters,
            "synthetic_path": args.synthetic,
        })
        cmd_prune(config, args.out_dir, resume=args.resume)
    else:
        cmd_analyze(config, args.record, analyses=args.analyses, out_dir=args.out_dir)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return run(args)
    except (ConfigError, InvalidParameterError, DatasetFormatError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except NumericFailureError as e:
        logger.error(f"Numeric failure: {e}")
        return EXIT_NUMERIC
    except MissingArtifactError as e:
        logger.error(f"Missing artifact: {e}")
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
