"""
``synth``: write a seeded synthetic dataset.
"""

from trajforge.commands import ProgressBar, add_command, print_table, save_dataset
from trajforge.config import require_path, resolve_config
from trajforge.synth import generate


def register(subparsers):
    return add_command(subparsers, "synth",
                       "Generate synthetic 1 Hz trajectories into --output JSONL")


def run(args) -> int:
    config = resolve_config(args)
    out_path = require_path(config.run.output, "--output")

    with ProgressBar("synth", unit="traj") as bar:
        dataset = generate(config.synth, workers=config.run.workers, progress_callback=bar)
    save_dataset(dataset, out_path, config)

    print_table([("trajectories", len(dataset)), ("points", dataset.n_points),
                 ("seed", config.synth.seed)], "Synth")
    return 0
