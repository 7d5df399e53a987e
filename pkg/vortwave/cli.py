"""
Command line: `simulate|dno-check|paralin-check|dispersion|convergence --config <path> --out <dir>
[--seed N] [--binary]`. Exit code 0 iff every asserted invariant passes.
"""
import argparse
import logging
import sys
from pathlib import Path

from vortwave import __version__
from vortwave.config import get_settings
from vortwave.errors import ConfigError, VortwaveError
from vortwave.models import RunConfig
from vortwave.tasks import COMMANDS

logger = logging.getLogger(__name__)


def configure_logging():
    logging.basicConfig(
        level=getattr(logging, get_settings().VORTWAVE_LOG_LEVEL.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vortwave", description="Water waves with constant vorticity over a variable bottom")
    parser.add_argument("--version", action="version", version=f"vortwave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        cmd.add_argument("--out", required=True, type=Path, help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="override the configured seed")
        cmd.add_argument("--binary", action="store_true", help="also write little-endian float64 dumps")
    return parser


def load_config(path: Path, seed: int = None) -> RunConfig:
    config = RunConfig.load(path)
    if seed is not None:
        config = RunConfig.parse({**config.model_dump(mode="json"), "seed": seed})
    return config


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return ConfigError.exit_code if e.code else 0

    try:
        config = load_config(args.config, args.seed)
        result = COMMANDS[args.command](config, args.out, binary=args.binary, base_dir=args.config.parent)
        logger.info(f"📊 Result: {result}")
        return 0
    except VortwaveError as e:
        logger.error(f"❌ {args.command}: {e}")
        return e.exit_code
    except Exception as e:
        logger.exception(f"❌ Unexpected error in {args.command}: {e}")
        return 1


if __name__ == "__main__":
    configure_logging()
    sys.exit(main())
