# File: app/main.py (Q2FMM)
"""
Command-line entry point: `python -m app.main <command> [--config PATH] [--seed INT] [--jobs INT] [--out DIR]`.

Exit codes: 0 success, 1 invalid input (configuration, lattice, widths, caps),
2 internal invariant violation or unexpected failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from app.commands import COMMAND_MODULES
from app.config import LOG_LEVEL, load_run_config, write_run_config
from q2fmm_utils import write_manifest
from scripts.errors import InvariantViolation, Q2FMMError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INTERNAL = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="q2fmm",
        description="Fast-multipole Coulomb circuits for the 2D extended Hubbard model.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Register commands
    for module in COMMAND_MODULES:
        module.register(subparsers)
    for sub in subparsers.choices.values():
        sub.add_argument("--config", default=None, help="JSON run configuration")
        sub.add_argument("--seed", type=int, default=None, help="Random seed (default 0)")
        sub.add_argument("--jobs", type=int, default=None, help="Worker processes for sweeps")
        sub.add_argument("--out", default=None, help="Output directory")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "seed": args.seed,
        "jobs": args.jobs,
        "out_dir": args.out,
        "state": getattr(args, "state", None),
    }


def setup_logging(verbose: bool = False):
    level = logging.DEBUG if verbose else getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)

    try:
        config = load_run_config(args.config, _overrides(args))
        logger.info(f"🚀 Running '{args.command}' (seed={config.seed}, jobs={config.jobs})")
        files: List[Path] = args.handler(config, args)
        files.append(write_run_config(config, config.out_dir))
        write_manifest(Path(config.out_dir), args.command, files, config.seed)
        logger.info(f"✅ '{args.command}' finished: {len(files)} files in {config.out_dir}")
        return EXIT_OK
    except InvariantViolation as e:
        logger.error(f"❌ Internal invariant violated: {e}", exc_info=True)
        return EXIT_INTERNAL
    except Q2FMMError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_INVALID
    except Exception as e:
        logger.error(f"❌ Unexpected failure in '{args.command}': {e}", exc_info=True)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
