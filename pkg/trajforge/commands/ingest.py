"""
``ingest``: parse a directory of GPX files into interchange JSONL.
"""

import logging

from trajforge.commands import add_command, print_table, save_dataset
from trajforge.config import require_path, resolve_config
from trajforge.ingest import ingest_directory

logger = logging.getLogger(__name__)


def register(subparsers):
    return add_command(subparsers, "ingest",
                       "Parse every *.gpx file of --input (a directory) into JSONL at --output")


def run(args) -> int:
    config = resolve_config(args)
    gpx_dir = require_path(config.run.input, "--input")
    out_path = require_path(config.run.output, "--output")

    dataset, stats = ingest_directory(gpx_dir, workers=config.run.workers)
    save_dataset(dataset, out_path, config)
    logger.info("Wrote %d trajectories to %s", len(dataset), out_path)

    rows = [(k, v) for k, v in stats.to_dict().items() if not isinstance(v, dict)]
    rows += [(f"dropped: {reason}", count) for reason, count in sorted(stats.dropped.items())]
    print_table(rows, "Ingest")
    return 0
