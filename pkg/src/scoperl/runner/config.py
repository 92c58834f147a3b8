"""Experiment configuration: YAML loading, validation and canonical serialisation.

A config file looks like::

    seed: 0
    outdir: runs/pendulum_ddpg
    env: {name: pendulum, num_envs: 1, params: {}}
    trainer: {total_timesteps: 100000, log_interval: 1000}
    agents:
      - type: ddpg
        id: ddpg
        scope: null            # row count in a multi-agent run
        share_memory: false
        models: {policy: {hidden: [64, 64]}}
        hyperparameters: {batch_size: 256}

Unknown keys anywhere are rejected so typos surface immediately.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from ..agents import AGENTS
from ..agents.base import build_config, model_spec
from ..envs import _COMMON_PARAMS, _ENV_PARAMS, ENVIRONMENTS


class ConfigError(ValueError):
    """A config file that cannot be parsed or does not validate."""

    def __init__(self, message: str, field_path: str | None = None, line: int | None = None):
        self.field_path = field_path
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field_path:
            where.append(f"field {field_path!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class EnvConfig:
    name: str
    num_envs: int = 1
    params: dict = field(default_factory=dict)


@dataclass
class TrainerBlock:
    total_timesteps: int
    log_interval: int = 1000
    eval_interval: int | None = None


@dataclass
class AgentConfig:
    type: str
    id: str
    scope: int | None = None
    share_memory: bool = False
    models: dict = field(default_factory=dict)
    hyperparameters: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    env: EnvConfig
    trainer: TrainerBlock
    agents: list[AgentConfig]
    seed: int = 0
    outdir: str = "runs/experiment"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        """Canonical YAML text: defaults filled, keys sorted."""
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    @property
    def scope_counts(self) -> list[int] | None:
        counts = [a.scope for a in self.agents]
        return None if all(c is None for c in counts) else counts


def bundled_configs() -> list[str]:
    root = resources.files(__package__) / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_config_path(name_or_path) -> Path:
    """Accept a filesystem path or the name of a bundled config (``pendulum_ddpg``)."""
    path = Path(name_or_path)
    if path.exists():
        return path
    candidate = resources.files(__package__) / "configs" / f"{name_or_path}.yaml"
    if candidate.is_file():
        return Path(str(candidate))
    raise ConfigError(f"no such config file or bundled config: {name_or_path}")


# -- line lookup -------------------------------------------------------------
def _line_index(text: str) -> dict[str, int]:
    """Map dotted field paths to 1-based source lines."""
    index: dict[str, int] = {}

    def walk(node, path):
        index.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                sub = f"{path}.{key.value}" if path else str(key.value)
                index[sub] = key.start_mark.line + 1
                walk(value, sub)
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                walk(item, f"{path}[{i}]")

    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return index
    if root is not None:
        walk(root, "")
    return index


class _Validator:
    def __init__(self, lines: dict[str, int]):
        self.lines = lines

    def error(self, path: str, message: str) -> ConfigError:
        line = None
        probe = path
        while probe and line is None:
            line = self.lines.get(probe)
            probe = probe.rsplit(".", 1)[0] if "." in probe else ""
        return ConfigError(message, path, line)

    def mapping(self, value, path: str, required: set[str], optional: set[str]) -> dict:
        if not isinstance(value, dict):
            raise self.error(path, f"expected a mapping, got {type(value).__name__}")
        for key in value:
            if key not in required | optional:
                raise self.error(f"{path}.{key}" if path else str(key),
                                 f"unknown key {key!r}; allowed: {sorted(required | optional)}")
        for key in sorted(required):
            if key not in value:
                raise self.error(path, f"missing required key {key!r}")
        return value

    def integer(self, value, path: str, minimum: int | None = None) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error(path, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise self.error(path, f"must be >= {minimum}, got {value}")
        return value


def validate(raw: Any, lines: dict[str, int] | None = None) -> ExperimentConfig:
    v = _Validator(lines or {})
    raw = v.mapping(raw, "", {"env", "trainer", "agents"}, {"seed", "outdir"})

    env_raw = v.mapping(raw["env"], "env", {"name"}, {"num_envs", "params"})
    name = env_raw["name"]
    if name not in ENVIRONMENTS:
        raise v.error("env.name", f"unknown environment {name!r}; expected one of {sorted(ENVIRONMENTS)}")
    num_envs = v.integer(env_raw.get("num_envs", 1), "env.num_envs", 1)
    params = env_raw.get("params") or {}
    v.mapping(params, "env.params", set(), _COMMON_PARAMS | _ENV_PARAMS[name])
    env = EnvConfig(name, num_envs, dict(params))

    tr_raw = v.mapping(raw["trainer"], "trainer", {"total_timesteps"}, {"log_interval", "eval_interval"})
    total = v.integer(tr_raw["total_timesteps"], "trainer.total_timesteps", 0)
    log_interval = v.integer(tr_raw.get("log_interval", 1000), "trainer.log_interval", 1)
    eval_interval = tr_raw.get("eval_interval")
    if eval_interval is not None:
        v.integer(eval_interval, "trainer.eval_interval", 1)
    trainer = TrainerBlock(total, log_interval, eval_interval)

    if not isinstance(raw["agents"], list) or not raw["agents"]:
        raise v.error("agents", "expected a non-empty list of agents")
    agents = []
    for i, block in enumerate(raw["agents"]):
        path = f"agents[{i}]"
        block = v.mapping(block, path, {"type"}, {"id", "scope", "share_memory", "models", "hyperparameters"})
        kind = block["type"]
        if kind not in AGENTS:
            raise v.error(f"{path}.type", f"unknown agent type {kind!r}; expected one of {sorted(AGENTS)}")
        scope = block.get("scope")
        if scope is not None:
            v.integer(scope, f"{path}.scope", 1)
        share = block.get("share_memory", False)
        if not isinstance(share, bool):
            raise v.error(f"{path}.share_memory", f"expected true/false, got {share!r}")
        models = block.get("models") or {}
        v.mapping(models, f"{path}.models", set(), {"policy", "value", "critic", "q"})
        for key, spec in models.items():
            try:
                model_spec(spec, 1, 1).validate()
            except (ValueError, TypeError) as exc:
                raise v.error(f"{path}.models.{key}", str(exc)) from None
        hyper = block.get("hyperparameters") or {}
        v.mapping(hyper, f"{path}.hyperparameters", set(), {f.name for f in dataclasses.fields(AGENTS[kind].config_cls)})
        try:
            filled = dataclasses.asdict(build_config(AGENTS[kind].config_cls, hyper))
        except (ValueError, TypeError) as exc:
            raise v.error(f"{path}.hyperparameters", str(exc)) from None
        agents.append(AgentConfig(kind, str(block.get("id", kind)), scope, share, dict(models), filled))

    ids = [a.id for a in agents]
    if len(set(ids)) != len(ids):
        raise v.error("agents", f"agent ids must be distinct, got {ids}")
    counts = [a.scope for a in agents]
    if len(agents) > 1 or counts[0] is not None:
        if any(c is None for c in counts) and any(c is not None for c in counts):
            raise v.error("agents", "give a scope to every agent or to none")
        if counts[0] is not None and sum(counts) != num_envs:
            raise v.error(f"agents[{len(agents) - 1}].scope", f"scope counts {counts} sum to {sum(counts)}, expected env.num_envs={num_envs}")
        if counts[0] is None and num_envs < len(agents):
            raise v.error("env.num_envs", f"{num_envs} environments cannot be split among {len(agents)} agents")

    seed = v.integer(raw.get("seed", 0), "seed", 0)
    outdir = str(raw.get("outdir", "runs/experiment"))
    return ExperimentConfig(env, trainer, agents, seed, outdir)


def loads(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"YAML parse error: {exc.problem or exc}", line=line) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML parse error: {exc}") from None
    return validate(raw, _line_index(text))


def load_config(path) -> ExperimentConfig:
    path = resolve_config_path(path)
    return loads(Path(path).read_text(encoding="utf-8"))
