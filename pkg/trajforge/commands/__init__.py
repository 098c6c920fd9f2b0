"""
Sub-commands of the TrajForge command line.

Shared helpers: parser construction with every config flag, progress bars
and artifact writing with the resolved config echoed alongside.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Union

from tqdm import tqdm

from trajforge.config import RunConfig, add_config_arguments, write_sidecar
from trajforge.errors import DataIOError
from trajforge.ingest import read_jsonl, write_jsonl
from trajforge.trajectory import TrajectoryDataset
from trajforge.utils import dump_json, format_table


def add_command(subparsers, name: str, help_text: str) -> argparse.ArgumentParser:
    """Sub-parser carrying --config and every --section.key flag."""
    parser = subparsers.add_parser(name, help=help_text, description=help_text)
    add_config_arguments(parser)
    return parser


class ProgressBar:
    """tqdm bar usable as a progress_callback(current, total)."""

    def __init__(self, desc: str, unit: str = "it"):
        self.bar: Optional[tqdm] = None
        self.desc = desc
        self.unit = unit

    def __call__(self, current: int, total: int) -> None:
        if self.bar is None:
            self.bar = tqdm(total=total, desc=self.desc, unit=self.unit, file=sys.stderr,
                            disable=None, leave=False)
        self.bar.update(current - self.bar.n)

    def close(self) -> None:
        if self.bar is not None:
            self.bar.close()

    def __enter__(self) -> "ProgressBar":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def load_dataset(path: Union[str, Path]) -> TrajectoryDataset:
    path = Path(path)
    if not path.is_file():
        raise DataIOError(f"input file not found: {path}", path=str(path))
    return read_jsonl(path)


def save_dataset(ds: TrajectoryDataset, path: Union[str, Path], config: RunConfig) -> int:
    """Write JSONL plus its <artifact>.run.toml config echo."""
    count = write_jsonl(ds, path)
    write_sidecar(path, config)
    return count


def save_report(payload: Dict[str, Any], path: Union[str, Path], config: RunConfig) -> None:
    """Write a JSON artifact with the resolved config and seed embedded."""
    dump_json(dict(payload, config=config.to_dict(), seed=config.seed), path)


def print_table(rows: Iterable[Tuple[str, Any]], title: str) -> None:
    print(format_table(rows, title))


def print_json(payload: Any) -> None:
    print(json.dumps(payload, sort_keys=True))
