#!/usr/bin/env python3

"""
Main entry point for TrajForge.
"""
import json
import logging
import os
import sys
import traceback
from typing import List, Optional

from trajforge.cli import run
from trajforge.errors import TrajForgeError

LOG_LEVEL_ENV = "TRAJFORGE_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def exception_handler(exc_type, exc_value, exc_traceback):
    """
    Global exception handler for errors that escape the command runner.

    Prints the traceback so a crash never goes unreported.
    """
    error_msg = ''.join(traceback.format_exception(exc_type, exc_value, exc_traceback))
    print(f"Unhandled exception: {error_msg}", file=sys.stderr)


def report_error(error: TrajForgeError) -> int:
    """Print the machine-readable error object to stderr and return its exit code."""
    print(json.dumps(error.to_dict(), sort_keys=True, default=str), file=sys.stderr)
    return error.exit_code


def setup_logging() -> None:
    level_name = os.environ.get(LOG_LEVEL_ENV, "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for TrajForge; returns the process exit code."""
    # Set up global exception handler
    sys.excepthook = exception_handler
    setup_logging()
    try:
        return run(argv)
    except TrajForgeError as e:
        logging.getLogger(__name__).debug("Command failed", exc_info=True)
        return report_error(e)


if __name__ == "__main__":
    sys.exit(main())
