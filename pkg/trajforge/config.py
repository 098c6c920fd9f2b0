"""
Run configuration: one dataclass per TOML section, loaded from a file and
overridden by ``--section.key`` command-line flags.
"""

import argparse
import logging
import typing
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import toml

from trajforge.errors import ConfigError
from trajforge.masking import MaskSpec
from trajforge.model import ModelConfig
from trajforge.preprocess import FilterPolicy
from trajforge.resample import ResamplePolicy
from trajforge.synth import SynthSpec

logger = logging.getLogger(__name__)

EVAL_TASKS = ("recovery", "prediction", "classification", "density")
AGGREGATES = ("point", "trajectory")


@dataclass(frozen=True)
class EvalConfig:
    """Downstream evaluation settings."""

    task: str = field(default="recovery", metadata={"help": "recovery, prediction, classification or density"})
    interval_dt: int = field(default=1, metadata={"help": "thinning step (s) before masking"})
    mask_ratio: float = field(default=0.5, metadata={"help": "recovery: share of points hidden"})
    horizon: int = field(default=5, metadata={"help": "prediction: future points hidden"})
    aggregate: str = field(default="point", metadata={"help": "MAE/RMSE averaging: point or trajectory"})
    label_key: str = field(default="mode", metadata={"help": "classification: meta key holding the label"})
    freeze_backbone: bool = field(default=True, metadata={"help": "classification: train the adapter only"})
    classifier_epochs: int = field(default=20, metadata={"help": "classification: adapter epochs"})
    train_fraction: float = field(default=0.7, metadata={"help": "classification: labelled share used to train"})

    def __post_init__(self):
        if self.task not in EVAL_TASKS:
            raise ConfigError(f"eval.task must be one of {EVAL_TASKS}")
        if self.aggregate not in AGGREGATES:
            raise ConfigError(f"eval.aggregate must be one of {AGGREGATES}")
        if self.interval_dt < 1 or self.horizon < 1 or self.classifier_epochs < 1:
            raise ConfigError("eval.interval_dt, eval.horizon and eval.classifier_epochs must be >= 1")
        if not 0 < self.mask_ratio < 1 or not 0 < self.train_fraction < 1:
            raise ConfigError("eval.mask_ratio and eval.train_fraction must be in (0, 1)")


@dataclass(frozen=True)
class RunPaths:
    """Paths, seed and worker count of a command."""

    input: str = field(default="", metadata={"help": "input file or directory"})
    output: str = field(default="", metadata={"help": "output artifact"})
    checkpoint: str = field(default="", metadata={"help": "model checkpoint (JSON)"})
    reference: str = field(default="", metadata={"help": "reference JSONL for density evaluation"})
    seed: int = field(default=0, metadata={"help": "global seed, also used by model and synth"})
    workers: int = field(default=1, metadata={"help": "threads for per-trajectory stages"})

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("run.workers must be >= 1")


SECTIONS: Dict[str, type] = {
    "run": RunPaths,
    "filter": FilterPolicy,
    "resample": ResamplePolicy,
    "mask": MaskSpec,
    "model": ModelConfig,
    "synth": SynthSpec,
    "eval": EvalConfig,
}

# Sections whose seed follows run.seed unless set explicitly
SEEDED_SECTIONS = ("model", "synth")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration of one command invocation."""

    run: RunPaths = field(default_factory=RunPaths)
    filter: FilterPolicy = field(default_factory=FilterPolicy)
    resample: ResamplePolicy = field(default_factory=ResamplePolicy)
    mask: MaskSpec = field(default_factory=MaskSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def seed(self) -> int:
        return self.run.seed

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        """Plain nested dict (tuples as lists, unset optionals omitted)."""
        out = {}
        for name in SECTIONS:
            section = asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v
                         for k, v in section.items() if v is not None}
        return out

    def to_toml(self) -> str:
        return toml.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping[str, Mapping[str, Any]]) -> "RunConfig":
        """
        Build a config from nested section tables.

        Values may be native (from TOML) or strings (from flags). When
        ``model.seed`` or ``synth.seed`` is absent it follows ``run.seed``.

        Raises:
            ConfigError: on unknown sections or keys and on invalid values
        """
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        tables = {name: dict(data.get(name, {})) for name in SECTIONS}
        run_seed = tables["run"].get("seed")
        if run_seed is not None:
            for name in SEEDED_SECTIONS:
                tables[name].setdefault("seed", run_seed)
        sections = {name: build_section(SECTIONS[name], name, tables[name]) for name in SECTIONS}
        return cls(**sections)


def _field_types(section_cls: type) -> Dict[str, Any]:
    return typing.get_type_hints(section_cls)


def coerce(hint: Any, value: Any, key: str) -> Any:
    """Convert a TOML or flag value to the annotated field type."""
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    try:
        if origin is Union:
            if value is None or (isinstance(value, str) and value.lower() in ("", "none")):
                return None
            inner = [a for a in args if a is not type(None)][0]
            return coerce(inner, value, key)
        if origin in (tuple, Tuple):
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            return tuple(coerce(args[0], v, key) for v in value)
        if hint is bool:
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("true", "1", "yes", "on"):
                return True
            if text in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if hint is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"not an integer: {value!r}")
            return int(value)
        if hint is float:
            return float(value)
        if hint is str:
            return str(value)
    except (TypeError, ValueError, IndexError) as e:
        raise ConfigError(f"invalid value for {key}: {e}", key=key) from e
    return value


def build_section(section_cls: type, name: str, values: Mapping[str, Any]):
    """Instantiate one section dataclass from raw values."""
    hints = _field_types(section_cls)
    unknown = set(values) - set(hints)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    kwargs = {k: coerce(hints[k], v, f"{name}.{k}") for k, v in values.items()}
    try:
        return section_cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"invalid [{name}] section: {e}") from e


def load_toml(path: Union[str, Path]) -> Dict[str, Dict[str, Any]]:
    """Read a TOML config file into nested tables."""
    path = Path(path)
    try:
        data = toml.load(path)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}", path=str(path)) from e
    except toml.TomlDecodeError as e:
        raise ConfigError(f"cannot parse {path}: {e}", path=str(path)) from e
    for name, table in data.items():
        if not isinstance(table, dict):
            raise ConfigError(f"top-level key {name!r} must be a [section]")
    return data


def flag_name(section: str, key: str) -> str:
    return f"--{key}" if section == "run" else f"--{section}.{key}"


def _default_text(f) -> str:
    if f.default is not MISSING:
        value = f.default
    elif f.default_factory is not MISSING:
        value = f.default_factory()
    else:
        return "required"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value) or "none"
    return str(value)


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    """
    Register ``--config`` plus one flag per config key.

    Flags default to None so only explicitly passed values override the file.
    """
    parser.add_argument("--config", metavar="PATH", default=None, help="TOML config file")
    for name, section_cls in SECTIONS.items():
        group = parser.add_argument_group(f"[{name}]")
        for f in fields(section_cls):
            help_text = f.metadata.get("help", "")
            group.add_argument(flag_name(name, f.name), dest=f"{name}.{f.name}", default=None,
                               metavar=f.name.upper(),
                               help=f"{help_text} (default: {_default_text(f)})")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """File values first, then flag overrides, then validation."""
    data: Dict[str, Dict[str, Any]] = {}
    if getattr(args, "config", None):
        data = {k: dict(v) for k, v in load_toml(args.config).items()}
    for dest, value in vars(args).items():
        if value is None or "." not in dest:
            continue
        section, key = dest.split(".", 1)
        if section in SECTIONS:
            data.setdefault(section, {})[key] = value
    config = RunConfig.from_dict(data)
    logger.debug("Resolved config:\n%s", config.to_toml())
    return config


def sidecar_path(artifact: Union[str, Path]) -> Path:
    """Config echo written next to a JSONL or CSV artifact."""
    artifact = Path(artifact)
    return artifact.with_name(artifact.name + ".run.toml")


def write_sidecar(artifact: Union[str, Path], config: RunConfig) -> Path:
    path = sidecar_path(artifact)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.to_toml(), encoding="utf-8")
    return path


def require_path(value: str, flag: str) -> Path:
    """
    Resolve a required path setting.

    Raises:
        ConfigError: when the setting is empty
    """
    if not value:
        raise ConfigError(f"{flag} is required", key=flag)
    return Path(value)
