"""Run configuration: INI config files with flat sections plus flag overrides.

Unknown sections or keys are rejected so typos fail loudly. Every artifact
the commands write carries the full resolved configuration.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field

from .protonet import ModelConfig
from .schedule import NoiseSchedule, make_schedule
from .trainer import TrainConfig


@dataclass
class ScheduleConfig:
    kind: str = "linear"
    steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def build(self) -> NoiseSchedule:
        return make_schedule(self.kind, self.steps, self.beta_start, self.beta_end)


@dataclass
class DataConfig:
    normalize: str = "minmax"


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=lambda: ModelConfig(length=24))
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def echo(self) -> dict:
        return {
            "model": asdict(self.model),
            "schedule": asdict(self.schedule),
            "train": asdict(self.train),
            "data": asdict(self.data),
        }


# section -> key -> (target dataclass attribute, parser)
def _bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_tuple(s: str) -> tuple:
    return tuple(int(v) for v in s.replace(" ", "").split(","))


_SCHEMA = {
    "model": {
        "length": int,
        "prototypes": int,
        "embed_dim": int,
        "base_channels": int,
        "channel_mults": _int_tuple,
        "heads": int,
        "pam_hidden": int,
        "pam_kernel": int,
        "mask_mode": str,
        "no_pam": _bool,
    },
    "schedule": {
        "kind": str,
        "steps": int,
        "beta_start": float,
        "beta_end": float,
    },
    "train": {
        "steps": int,
        "batch": int,
        "lr": float,
        "warmup": int,
        "p_drop": float,
        "seed": int,
        "checkpoint_every": int,
        "no_prompt": _bool,
    },
    "data": {
        "normalize": str,
    },
}

# config key -> dataclass field when the names differ
_RENAME = {("model", "prototypes"): "n_prototypes", ("train", "batch"): "batch_size"}


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional INI file plus flat overrides.

    Overrides use "section.key" names (e.g. {"train.steps": 100}) and win
    over file values; both are validated against the schema.
    """
    values: dict[str, dict] = {s: {} for s in _SCHEMA}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise FileNotFoundError(f"config file {path} not found")
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ValueError(f"{path}: unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ValueError(f"{path}: unknown key {key!r} in [{section}]")
                values[section][key] = _SCHEMA[section][key](raw)
    for dotted, val in (overrides or {}).items():
        if val is None:
            continue
        section, key = dotted.split(".", 1)
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ValueError(f"unknown config override {dotted!r}")
        if not isinstance(val, (bool, int, float, tuple)) or isinstance(val, str):
            val = _SCHEMA[section][key](val)
        values[section][key] = val

    def kwargs(section):
        return {
            _RENAME.get((section, k), k): v for k, v in values[section].items()
        }

    length = values["model"].pop("length", 24)
    model = ModelConfig(length=length, **kwargs("model"))
    # model seed follows the training seed so one value pins the whole run
    model.seed = values["train"].get("seed", 0)
    return RunConfig(
        model=model,
        schedule=ScheduleConfig(**kwargs("schedule")),
        train=TrainConfig(**kwargs("train")),
        data=DataConfig(**kwargs("data")),
    )
