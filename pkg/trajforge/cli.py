"""
Command-line dispatcher for TrajForge.

Each sub-command lives in its own module under ``trajforge.commands`` and
exposes ``register(subparsers)`` and ``run(args) -> int``.
"""

import argparse
import logging
from typing import List, Optional

from trajforge import __version__
from trajforge.commands import (evaluate, ingest, mask_preview, preprocess, pretrain,
                                synth)
from trajforge.errors import ConfigError

logger = logging.getLogger(__name__)

COMMANDS = (ingest, preprocess, synth, pretrain, evaluate, mask_preview)


class ArgumentParser(argparse.ArgumentParser):
    """Parser that reports usage errors as ConfigError instead of exiting."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}", usage=self.format_usage().strip())


def build_parser() -> argparse.ArgumentParser:
    """Top-level parser with one sub-parser per command."""
    parser = ArgumentParser(
        prog="trajforge",
        description="Trajectory preprocessing, masked pretraining and evaluation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    for command in COMMANDS:
        sub = command.register(subparsers)
        sub.set_defaults(handler=command.run)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse arguments and run the selected command."""
    args = build_parser().parse_args(argv)
    logger.debug("Running %s", args.command)
    return args.handler(args)
