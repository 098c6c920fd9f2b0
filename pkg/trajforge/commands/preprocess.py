"""
``preprocess``: 1 Hz normalization and filtering of a JSONL dataset.
"""

import logging
from pathlib import Path

from trajforge.commands import add_command, load_dataset, print_table, save_dataset, save_report
from trajforge.config import require_path, resolve_config
from trajforge.preprocess import run_pipeline

logger = logging.getLogger(__name__)


def report_path(output: Path) -> Path:
    """FilterReport JSON written next to the filtered JSONL."""
    return output.with_name(output.name + ".report.json")


def register(subparsers):
    return add_command(subparsers, "preprocess",
                       "Normalize to 1 Hz and filter --input JSONL; write kept trajectories to --output")


def run(args) -> int:
    config = resolve_config(args)
    in_path = require_path(config.run.input, "--input")
    out_path = require_path(config.run.output, "--output")

    dataset = load_dataset(in_path)
    kept, report = run_pipeline(dataset, config.filter, workers=config.run.workers)
    save_dataset(kept, out_path, config)
    save_report({"filter_report": report.to_dict()}, report_path(out_path), config)

    rows = [("inputs", report.inputs), ("splits", report.splits), ("kept", report.kept)]
    rows += [(f"rejected: {rule}", count) for rule, count in sorted(report.rejected_by_rule.items())]
    print_table(rows, "Preprocess")
    if not report.is_conserved():
        logger.error("Filter accounting does not balance: %s", report.to_dict())
    return 0
