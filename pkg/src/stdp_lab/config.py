"""JSON configuration with strict key checking."""

from __future__ import annotations

import dataclasses
import enum
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .experiments import ExperimentConfig
from .rates import ActivationParams, TrajectoryParams
from .rules import RuleParams

SEED_ENV = "STDP_LAB_SEED"

# Reduced preset for quick runs: 100 sequences x 100 trains.
QUICK = {"n_sequences": 100, "n_trains": 100}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GradlinkSettings:
    n_post: int = 3
    n_pre: int = 4
    h: float = 1e-4
    eps: float = 1e-2
    relax_steps: int = 50
    instances: int = 5

    def __post_init__(self):
        for name in ("n_post", "n_pre", "relax_steps", "instances"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ValueError(f"{name} must be an integer >= 1")
        if not self.h > 0 or not self.eps > 0:
            raise ValueError("h and eps must be > 0")


@dataclass(frozen=True)
class Settings:
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    gradlink: GradlinkSettings = field(default_factory=GradlinkSettings)


_EXPERIMENT_KEYS = {
    f.name for f in dataclasses.fields(ExperimentConfig) if f.name not in ("trajectory", "activation", "rule")
}
# Sequence length is set once, under "experiment".
_TRAJECTORY_KEYS = {f.name for f in dataclasses.fields(TrajectoryParams)} - {"length"}
GROUPS = {
    "trajectory": _TRAJECTORY_KEYS,
    "activation": {f.name for f in dataclasses.fields(ActivationParams)},
    "rule": {f.name for f in dataclasses.fields(RuleParams)},
    "experiment": _EXPERIMENT_KEYS,
    "gradlink": {f.name for f in dataclasses.fields(GradlinkSettings)},
}


def _check_keys(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a JSON object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def parse_settings(doc: dict, overrides: dict | None = None) -> Settings:
    """Build settings from a parsed document; ``overrides`` patch the experiment group."""
    _check_keys(doc, GROUPS, "config")
    for group, keys in GROUPS.items():
        _check_keys(doc.get(group, {}), keys, group)
    experiment = dict(doc.get("experiment", {}))
    experiment.update(overrides or {})
    try:
        trajectory = TrajectoryParams(**doc.get("trajectory", {}))
        cfg = ExperimentConfig(
            trajectory=trajectory,
            activation=ActivationParams(**doc.get("activation", {})),
            rule=RuleParams(**doc.get("rule", {})),
            **experiment,
        )
        gradlink = GradlinkSettings(**doc.get("gradlink", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return Settings(cfg, gradlink)


def load_settings(path=None, overrides: dict | None = None) -> Settings:
    """Read a config file (or none) and resolve the master seed.

    Seed precedence: ``overrides`` (command line), the file's
    ``experiment.master_seed``, the ``STDP_LAB_SEED`` environment variable,
    then the built-in default.
    """
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    overrides = dict(overrides or {})
    file_seed = isinstance(doc, dict) and "master_seed" in doc.get("experiment", {})
    if "master_seed" not in overrides and not file_seed and os.environ.get(SEED_ENV):
        try:
            overrides["master_seed"] = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    return parse_settings(doc, overrides)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    return load_settings(path, overrides).experiment


def _plain(value):
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def settings_to_dict(settings: Settings) -> dict:
    """Inverse of :func:`parse_settings`; suitable for a run manifest."""
    cfg = settings.experiment
    out = {
        "trajectory": {k: _plain(getattr(cfg.trajectory, k)) for k in sorted(_TRAJECTORY_KEYS)},
        "activation": dataclasses.asdict(cfg.activation),
        "rule": {k: _plain(v) for k, v in dataclasses.asdict(cfg.rule).items()},
        "experiment": {k: _plain(getattr(cfg, k)) for k in sorted(_EXPERIMENT_KEYS)},
        "gradlink": dataclasses.asdict(settings.gradlink),
    }
    return out
