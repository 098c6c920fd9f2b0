"""
``eval``: score a checkpoint on a held-out JSONL dataset.

Tasks: recovery (random half masked), prediction (last points masked),
classification (adapter trained on labelled trajectories) and density
(grid divergence of --input against --reference, no model needed).
"""

import logging

from trajforge.commands import (ProgressBar, add_command, load_dataset, print_table,
                                save_report)
from trajforge.config import require_path, resolve_config
from trajforge.evaluation import (evaluate_classification, evaluate_density,
                                  evaluate_reconstruction)
from trajforge.model import load_checkpoint

logger = logging.getLogger(__name__)


def register(subparsers):
    return add_command(subparsers, "eval",
                       "Evaluate --checkpoint on --input JSONL; write a metric report to --output")


def run(args) -> int:
    config = resolve_config(args)
    in_path = require_path(config.run.input, "--input")
    out_path = require_path(config.run.output, "--output")
    task = config.eval.task
    dataset = load_dataset(in_path)

    if task == "density":
        reference = load_dataset(require_path(config.run.reference, "--reference"))
        report = evaluate_density(dataset, reference)
    else:
        model, checkpoint = load_checkpoint(require_path(config.run.checkpoint, "--checkpoint"))
        logger.info("Loaded checkpoint from epoch %s", checkpoint.get("epoch"))
        if task == "classification":
            with ProgressBar("classifier", unit="epoch") as bar:
                report = evaluate_classification(model, dataset, config.eval, config.resample,
                                                 config.seed, progress_callback=bar)
        else:
            report = evaluate_reconstruction(model, dataset, task, config.eval,
                                             config.resample, config.seed)

    save_report({"metrics": report.to_dict()}, out_path, config)
    print_table(report.rows(), f"Eval ({task})")
    return 0
