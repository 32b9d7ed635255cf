"""Run configuration: a flat ``key = value`` file with dotted keys.

Blank lines and ``#`` comments are ignored. Every key is optional except
``seed``. Command-line ``--set key=value`` overrides are applied after the file
and are validated the same way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional, Tuple

from gridplan.grid import (
    DESK_REWARDS,
    EnvironmentSpec,
    GridDims,
    format_reward_placements,
    parse_reward_placements,
)
from gridplan.reward import QmdpTrainConfig
from gridplan.transition import BpTrainConfig

BP_ALGORITHMS = ("bp", "naive-count", "weighted-count", "all")
QMDP_CONDITIONS = ("learnt-transition", "known-transition")


class ConfigError(ValueError):
    """Bad configuration text; the message names the source and line."""


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


def _capacity(text: str) -> Optional[int]:
    return None if text == "all" else int(text)


def _sizes(text: str) -> Tuple[int, ...]:
    sizes = tuple(int(x) for x in text.split(",") if x.strip())
    if not sizes:
        raise ValueError("expected a comma-separated list of grid sizes")
    return sizes


# key -> (section, field, parser)
KEYS: Dict[str, Tuple[str, str, Callable[[str], object]]] = {
    "seed": ("run", "seed", int),
    "dims.nd": ("dims", "nd", int),
    "dims.na": ("dims", "na", int),
    "dims.w": ("dims", "w", int),
    "dims.h": ("dims", "h", int),
    "dims.gamma": ("dims", "gamma", float),
    "env.preset": ("env", "preset", str),
    "env.slip": ("env", "slip", float),
    "env.obs_noise": ("env", "obs_noise", float),
    "env.rewards": ("env", "rewards", parse_reward_placements),
    "data.trajectories": ("run", "n_trajectories", int),
    "data.length": ("run", "trajectory_length", int),
    "expert.trajectories": ("run", "n_expert", int),
    "expert.length": ("run", "expert_length", int),
    "bp.algorithm": ("run", "bp_algorithm", _choice(BP_ALGORITHMS)),
    "bp.recurrence": ("bp", "recurrence", str),
    "bp.schedule": ("bp", "schedule", str),
    "bp.alpha0": ("bp", "alpha0", float),
    "bp.decay": ("bp", "decay", float),
    "bp.rmsprop_rho": ("bp", "rmsprop_rho", float),
    "bp.rmsprop_eps": ("bp", "rmsprop_eps", float),
    "bp.epochs": ("bp", "epochs", int),
    "bp.observation_stage": ("bp", "observation_stage", str),
    "qmdp.condition": ("run", "qmdp_condition", _choice(QMDP_CONDITIONS)),
    "qmdp.transition_model": ("run", "transition_model", str),
    "qmdp.baselines": ("run", "qmdp_baselines", _bool),
    "qmdp.schedule": ("qmdp", "schedule", str),
    "qmdp.alpha0": ("qmdp", "alpha0", float),
    "qmdp.rmsprop_rho": ("qmdp", "rmsprop_rho", float),
    "qmdp.rmsprop_eps": ("qmdp", "rmsprop_eps", float),
    "qmdp.replay": ("qmdp", "replay", str),
    "qmdp.replay_capacity": ("qmdp", "replay_capacity", _capacity),
    "qmdp.feedback": ("qmdp", "feedback", str),
    "qmdp.epochs": ("qmdp", "epochs", int),
    "qmdp.vi_epsilon": ("qmdp", "vi_epsilon", float),
    "model.transition": ("run", "transition_file", str),
    "model.reward": ("run", "reward_file", str),
    "vi.epsilon": ("run", "vi_epsilon", float),
    "vi.max_iter": ("run", "vi_max_iter", int),
    "benchmark.sizes": ("run", "benchmark_sizes", _sizes),
    "benchmark.repetitions": ("run", "benchmark_repetitions", int),
    "output.dir": ("run", "output_dir", str),
}


@dataclass(frozen=True)
class RunConfig:
    seed: int
    dims: GridDims = field(default_factory=GridDims)
    env: EnvironmentSpec = field(
        default_factory=lambda: EnvironmentSpec(rewards=parse_reward_placements(DESK_REWARDS))
    )
    n_trajectories: int = 80
    trajectory_length: int = 100
    n_expert: int = 20
    expert_length: int = 30
    bp_algorithm: str = "bp"
    bp: BpTrainConfig = field(default_factory=BpTrainConfig)
    qmdp_condition: str = "known-transition"
    transition_model: Optional[str] = None
    qmdp_baselines: bool = False
    qmdp: QmdpTrainConfig = field(default_factory=QmdpTrainConfig)
    transition_file: Optional[str] = None
    reward_file: Optional[str] = None
    vi_epsilon: float = 1e-4
    vi_max_iter: Optional[int] = None
    benchmark_sizes: Tuple[int, ...] = (10, 20, 40, 80, 160)
    benchmark_repetitions: int = 3
    output_dir: str = "out"

    def __post_init__(self):
        for name in ("n_trajectories", "trajectory_length", "n_expert", "expert_length", "benchmark_repetitions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.vi_epsilon <= 0:
            raise ValueError("vi.epsilon must be positive")
        if self.vi_max_iter is not None and self.vi_max_iter < 1:
            raise ValueError("vi.max_iter must be >= 1")


def _split_lines(lines: Iterable[Tuple[str, int, str]]):
    """Yield ``(key, value, where)`` from ``(source, lineno, text)`` triples."""
    for source, lineno, text in lines:
        where = f"{source}:{lineno}"
        stripped = text.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{where}: expected 'key = value', got {text.strip()!r}")
        yield key, value, where


def parse_config(text: str, source: str = "<config>", overrides: Iterable[str] = ()) -> RunConfig:
    lines = [(source, n, line) for n, line in enumerate(text.splitlines(), start=1)]
    lines += [("--set", n, item) for n, item in enumerate(overrides, start=1)]

    sections: Dict[str, Dict[str, object]] = {"run": {}, "dims": {}, "env": {}, "bp": {}, "qmdp": {}}
    where_of: Dict[str, str] = {}
    for key, value, where in _split_lines(lines):
        if key not in KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        section, name, parse = KEYS[key]
        try:
            sections[section][name] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key}: {exc}") from None
        where_of[f"{section}.{name}"] = where

    def build(section: str, cls, **extra):
        try:
            return cls(**{**extra, **sections[section]})
        except ValueError as exc:
            keys = [where_of[f"{section}.{k}"] for k in sections[section]]
            at = keys[-1] if keys else source
            raise ConfigError(f"{at}: invalid {section} settings: {exc}") from None

    run = sections["run"]
    if "seed" not in run:
        raise ConfigError(f"{source}: missing required key 'seed'")
    seed = run["seed"]
    try:
        return build(
            "run",
            RunConfig,
            dims=build("dims", GridDims),
            env=build("env", EnvironmentSpec, seed=seed,
                      rewards=parse_reward_placements(DESK_REWARDS)),
            bp=build("bp", BpTrainConfig, seed=seed),
            qmdp=build("qmdp", QmdpTrainConfig, seed=seed),
        )
    except TypeError as exc:  # pragma: no cover - KEYS and the dataclasses are kept in sync
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path, overrides: Iterable[str] = ()) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path), overrides)


def format_config(cfg: RunConfig) -> str:
    """Render a config as text that :func:`parse_config` maps back to an equal object."""
    lines = []
    for key, (section, name, _) in KEYS.items():
        obj = cfg if section == "run" else getattr(cfg, section)
        value = getattr(obj, name)
        if value is None:
            if key == "qmdp.replay_capacity":
                lines.append(f"{key} = all")
            continue
        if key == "env.rewards":
            value = format_reward_placements(value)
        elif key == "benchmark.sizes":
            value = ",".join(str(x) for x in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
