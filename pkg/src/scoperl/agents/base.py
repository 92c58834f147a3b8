"""Common agent plumbing: configuration, memory registration, metrics and checkpoints.

The interaction contract used by the trainers is::

    actions = agent.act(states, timestep)
    agent.record_transition(states, actions, rewards, next_states, terminated, truncated, timestep)
    agent.post_interaction(timestep)      # runs ``_update`` on the agent's cadence

``next_states`` are the observations the step produced *before* any
auto-reset, so bootstrapping never mixes two episodes.
"""

from __future__ import annotations

import contextlib
import dataclasses
from collections import defaultdict
from typing import Any

import numpy as np

from ..autograd import Tensor
from ..autograd.serialization import load_tensors, save_tensors
from ..envs.base import Space
from ..memory import Memory
from ..models import Model, ModelSpec


class InsufficientSamplesError(RuntimeError):
    """An update was requested before the memory held enough transitions."""


def build_config(config_cls, cfg: Any):
    """Instantiate ``config_cls`` from a dataclass, dict or ``None`` (unknown keys are errors)."""
    if cfg is None:
        return config_cls()
    if isinstance(cfg, config_cls):
        return cfg
    names = {f.name for f in dataclasses.fields(config_cls)}
    unknown = set(cfg) - names
    if unknown:
        raise ValueError(f"{config_cls.__name__}: unknown key(s) {sorted(unknown)}")
    return config_cls(**cfg)


def model_spec(block: dict | None, input_dim: int, output_dim: int, default_hidden=(64, 64),
               default_activation="relu", output_scale=None) -> ModelSpec:
    block = dict(block or {})
    unknown = set(block) - {"hidden", "activation"}
    if unknown:
        raise ValueError(f"model block: unknown key(s) {sorted(unknown)}")
    return ModelSpec(input_dim, output_dim, hidden=list(block.get("hidden", default_hidden)),
                     activation=block.get("activation", default_activation), output_scale=output_scale)


@contextlib.contextmanager
def frozen(*models: Model):
    """Stop gradients from accumulating into ``models`` inside the block."""
    params = [p for m in models for p in m.parameters()]
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, flag in zip(params, flags):
            p.requires_grad = flag


def linear_schedule(initial: float, final: float, duration: int, t: int) -> float:
    if duration <= 0:
        return final
    frac = min(max(t / duration, 0.0), 1.0)
    return initial + frac * (final - initial)


def all_finite(models) -> bool:
    return all(np.all(np.isfinite(v)) for m in models for v in m.state_dict().values())


class Agent:
    name = "agent"
    config_cls: type = object

    def __init__(self, observation_space: Space, action_space: Space, cfg=None, models: dict | None = None,
                 memory: Memory | None = None, num_envs: int = 1, seed: int = 0, agent_id: str | None = None):
        self.observation_space = observation_space
        self.action_space = action_space
        self.cfg = build_config(self.config_cls, cfg)
        self.model_cfg = dict(models or {})
        self.memory = memory
        self.num_envs = int(num_envs)
        self.seed = seed
        self.agent_id = agent_id or self.name
        self.rng = np.random.default_rng(seed)
        self.checkpoint_modules: dict[str, Any] = {}
        self.update_count = 0
        self._metrics: dict[str, list[float]] = defaultdict(list)

    # -- helpers ---------------------------------------------------------
    @property
    def obs_dim(self) -> int:
        return self.observation_space.dim

    @property
    def action_dim(self) -> int:
        return self.action_space.dim

    def _seed(self, offset: int) -> int:
        return int(self.rng.integers(0, 2**31 - 1)) + offset

    def _register_memory(self, capacity: int, tensors: list[tuple[str, int, str]]) -> Memory:
        if self.memory is None:
            self.memory = Memory(capacity, self.num_envs, seed=self._seed(0))
        for name, dim, tag in tensors:
            self.memory.create_tensor(name, dim, tag, exist_ok=True)
        return self.memory

    def track(self, name: str, value: float) -> None:
        self._metrics[name].append(float(value))

    def pop_metrics(self) -> dict[str, float]:
        """Mean of every tracked value since the previous call."""
        out = {name: float(np.mean(values)) for name, values in self._metrics.items() if values}
        self._metrics.clear()
        return out

    def random_actions(self, n: int) -> np.ndarray:
        return self.action_space.sample(self.rng, n)

    # -- interaction -----------------------------------------------------
    def act(self, states: np.ndarray, timestep: int, deterministic: bool = False) -> np.ndarray:
        raise NotImplementedError

    def record_transition(self, states, actions, rewards, next_states, terminated, truncated, timestep: int) -> None:
        pass

    def post_interaction(self, timestep: int) -> None:
        pass

    def _update(self, timestep: int) -> None:
        raise NotImplementedError

    # -- persistence -----------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"counters/update_count": np.asarray(float(self.update_count))}
        for prefix, module in self.checkpoint_modules.items():
            if isinstance(module, Tensor):
                out[prefix] = module.data.copy()
                continue
            for key, value in module.state_dict().items():
                out[f"{prefix}/{key}"] = np.asarray(value)
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.update_count = int(state.get("counters/update_count", 0))
        for prefix, module in self.checkpoint_modules.items():
            if isinstance(module, Tensor):
                module.data[...] = state[prefix]
                continue
            sub = {k[len(prefix) + 1:]: v for k, v in state.items() if k.startswith(prefix + "/")}
            module.load_state_dict(sub)

    def save(self, path) -> None:
        save_tensors(path, self.state_dict())

    def load(self, path) -> None:
        self.load_state_dict(load_tensors(path))

    def models(self) -> list[Model]:
        return [m for m in self.checkpoint_modules.values() if isinstance(m, Model)]
