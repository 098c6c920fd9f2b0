"""
``mask-preview``: print the masked index sets the pretraining pipeline
would draw for the first trajectories of a dataset.
"""

from typing import Any, Dict, List

from trajforge.commands import add_command, load_dataset, print_json, save_report
from trajforge.config import require_path, resolve_config
from trajforge.errors import TooShort
from trajforge.masking import mask_trajectory
from trajforge.resample import dynamic_resample, interval_resample


def register(subparsers):
    parser = add_command(subparsers, "mask-preview",
                         "Show resampled lengths and masked indices for --input JSONL")
    parser.add_argument("--limit", type=int, default=5, help="trajectories to preview (default: 5)")
    return parser


def preview(dataset, config, limit: int) -> List[Dict[str, Any]]:
    """One record per trajectory: id, lengths, strategy and masked indices."""
    records = []
    for i, traj in enumerate(dataset.trajectories[:max(0, limit)]):
        record: Dict[str, Any] = {"id": traj.id, "n": len(traj)}
        try:
            resampled = interval_resample(dynamic_resample(traj, config.resample),
                                          config.resample.interval_dt)
            masked = mask_trajectory(resampled, config.mask, (config.seed, i))
        except TooShort as e:
            record["skipped"] = e.message
        else:
            record.update(resampled=len(resampled), strategy=masked.strategy,
                          masked=masked.masked_indices.tolist())
        records.append(record)
    return records


def run(args) -> int:
    config = resolve_config(args)
    dataset = load_dataset(require_path(config.run.input, "--input"))
    records = preview(dataset, config, args.limit)
    for record in records:
        print_json(record)
    if config.run.output:
        save_report({"previews": records}, config.run.output, config)
    return 0
