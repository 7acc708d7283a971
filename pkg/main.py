# main.py
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from commands import COMMANDS, execute
from config import settings
from exceptions import EXIT_CODES, ConfigValidationError, SolscopeError
from services.config_service import config_service

logger = logging.getLogger("solscope")


def build_parser() -> argparse.ArgumentParser:
    codes = "\n".join(f"  {code}  {meaning}" for code, meaning in sorted(EXIT_CODES.items()))
    parser = argparse.ArgumentParser(
        prog="solscope",
        description="Radial NLS soliton-resolution lab: evolve, decompose, and probe decay estimates",
        epilog=f"exit codes:\n{codes}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="flat 'section.key = value' run document")
    parser.add_argument("--out", type=Path, default=None, help=f"run directory (default under {settings.OUTPUT_DIR})")
    parser.add_argument("--seed", type=int, default=None, help="overrides run.seed")
    parser.add_argument("--trajectory", type=Path, default=None,
                        help="stored trajectory directory (decompose, observables)")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = config_service.load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigValidationError([f"seed = {args.seed} must lie in [0, 2^64)"])
            config = config.model_copy(update={"seed": args.seed})
    except SolscopeError as e:
        logger.error(f"❌ {e.message}")
        return e.exit_code

    out = args.out if args.out is not None else Path(settings.OUTPUT_DIR) / args.command
    return execute(args.command, COMMANDS[args.command], config, out, args.trajectory)


if __name__ == "__main__":
    sys.exit(main())
