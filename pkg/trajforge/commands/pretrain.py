"""
``pretrain``: masked-reconstruction pretraining on a JSONL dataset.
"""

import logging
from pathlib import Path

from trajforge.commands import ProgressBar, add_command, load_dataset, print_table
from trajforge.config import require_path, resolve_config, write_sidecar
from trajforge.model import count_parameters, save_checkpoint
from trajforge.training import Pretrainer, write_history_csv

logger = logging.getLogger(__name__)


def history_path(checkpoint: Path) -> Path:
    """Loss history CSV written next to the checkpoint."""
    return checkpoint.with_name(checkpoint.stem + ".history.csv")


def register(subparsers):
    return add_command(subparsers, "pretrain",
                       "Pretrain on --input JSONL; write the best model to --checkpoint")


def run(args) -> int:
    config = resolve_config(args)
    in_path = require_path(config.run.input, "--input")
    ckpt_path = require_path(config.run.checkpoint, "--checkpoint")

    dataset = load_dataset(in_path)
    with ProgressBar("pretrain", unit="epoch") as bar:
        trainer = Pretrainer(config.model, config.resample, config.mask,
                             debug_callback=lambda title, msg: logger.info("%s: %s", title, msg),
                             progress_callback=bar)
        result = trainer.fit(dataset)

    save_checkpoint(ckpt_path, result.model, result.best_epoch,
                    extra={"run_config": config.to_dict(), "best_val_loss": result.best_val_loss,
                           "initial_val_loss": result.initial_val_loss})
    csv_path = history_path(ckpt_path)
    write_history_csv(result.history, csv_path)
    write_sidecar(csv_path, config)

    print_table([("parameters", count_parameters(result.model)),
                 ("epochs run", len(result.history) - 1),
                 ("best epoch", result.best_epoch),
                 ("initial val loss", result.initial_val_loss),
                 ("best val loss", result.best_val_loss)], "Pretrain")
    return 0
