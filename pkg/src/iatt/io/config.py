"""Run configuration: YAML/JSON file -> validated dataclasses with the
hyperparameter-table defaults. Unknown keys are rejected by name; the
effective configuration can be echoed back as a plain dict.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from ..engine import ScenarioSpec
from ..errors import ConfigurationError
from ..training import IWTrainConfig, TrainConfig


@dataclass
class ScenarioConfig:
    kind: str = "spread"
    n_per_side: int = 3
    horizon: int = 200
    visibility_radius: float | None = None
    reward_mode: str = "training"
    constants: dict = field(default_factory=dict)

    def to_spec(self) -> ScenarioSpec:
        return ScenarioSpec(
            kind=self.kind,
            n_per_side=self.n_per_side,
            horizon=self.horizon,
            visibility_radius=self.visibility_radius,
            reward_mode=self.reward_mode,
            constants=dict(self.constants),
        )


@dataclass
class GFSettings:
    sigma0: float = 25.0
    epsilon: float = 1e-2
    t_max: float = 1.0
    lr: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    batch_size: int = 128
    epochs: int = 60
    hidden: int = 64
    n_samples: int = 10000
    seed: int = 0


@dataclass
class EvalSettings:
    episodes: int = 1000
    steps: int = 200
    seed: int = 0


@dataclass
class PlaySettings:
    episodes: int = 5
    steps: int = 100
    tick_hz: float = 10.0
    port: int = 8765
    seed: int = 0


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    gradfield: GFSettings = field(default_factory=GFSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    iw: IWTrainConfig = field(default_factory=IWTrainConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)
    play: PlaySettings = field(default_factory=PlaySettings)


def _coerce(value, ftype, path):
    # annotations arrive as strings under `from __future__ import annotations`
    ft = str(ftype)
    if ft.startswith("tuple[") and isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    # YAML 1.1 reads "1e9"-style floats as strings; recover numerics
    if isinstance(value, str) and ("float" in ft or "int" in ft):
        try:
            value = float(value) if "float" in ft else int(value)
        except ValueError:
            raise ConfigurationError(
                f"config key {path} expects a number, got {value!r}"
            ) from None
    if ft.startswith("float") and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if ft == "float" and not isinstance(value, float):
        raise ConfigurationError(f"config key {path} expects a float, got {value!r}")
    if ft == "int" and (not isinstance(value, int) or isinstance(value, bool)):
        raise ConfigurationError(f"config key {path} expects an integer, got {value!r}")
    if ft == "bool" and not isinstance(value, bool):
        raise ConfigurationError(f"config key {path} expects a boolean, got {value!r}")
    return value


def _from_dict(cls, data: dict, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"config section {path!r} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigurationError(
            f"unknown config key {path}.{sorted(unknown)[0]}"
        )
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        if dataclasses.is_dataclass(f.type) or (
            isinstance(f.type, str) and f.type in _SECTION_TYPES
        ):
            kwargs[name] = _from_dict(_SECTION_TYPES[str(f.type)], value, f"{path}.{name}")
        else:
            kwargs[name] = _coerce(value, f.type, f"{path}.{name}")
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigurationError(f"bad config section {path!r}: {e}") from e


_SECTION_TYPES = {
    "ScenarioConfig": ScenarioConfig,
    "GFSettings": GFSettings,
    "TrainConfig": TrainConfig,
    "IWTrainConfig": IWTrainConfig,
    "EvalSettings": EvalSettings,
    "PlaySettings": PlaySettings,
}

_SECTIONS = {
    "scenario": ScenarioConfig,
    "gradfield": GFSettings,
    "train": TrainConfig,
    "iw": IWTrainConfig,
    "eval": EvalSettings,
    "play": PlaySettings,
}


def config_from_dict(data: dict | None) -> RunConfig:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a mapping")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config key {sorted(unknown)[0]}")
    kwargs = {
        name: _from_dict(cls, data.get(name), name) for name, cls in _SECTIONS.items()
    }
    return RunConfig(**kwargs)


def parse_config(path) -> RunConfig:
    """Load a YAML (or JSON) config; absent keys take documented defaults."""
    with open(path) as f:
        data = yaml.safe_load(f)
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    """The effective configuration, suitable for echoing to the run log."""
    out = dataclasses.asdict(cfg)
    out["gradfield"]["betas"] = list(out["gradfield"]["betas"])
    return out
