from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np


@dataclass(frozen=True)
class Space:
    """Discrete (``n`` choices) or box (bounded real vector) space."""

    kind: str
    n: int | None = None
    low: np.ndarray | None = field(default=None, compare=False)
    high: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "discrete":
            if self.n is None or int(self.n) < 1:
                raise ValueError("discrete space needs n >= 1")
        elif self.kind == "box":
            low = np.asarray(self.low, dtype=np.float64).reshape(-1)
            high = np.asarray(self.high, dtype=np.float64).reshape(-1)
            if low.shape != high.shape or not np.all(low < high):
                raise ValueError("box space needs low < high elementwise")
            object.__setattr__(self, "low", low)
            object.__setattr__(self, "high", high)
        else:
            raise ValueError(f"unknown space kind {self.kind!r}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (1,) if self.kind == "discrete" else self.low.shape

    @property
    def dim(self) -> int:
        """Width of one row in a batched array over this space."""
        return self.shape[0]

    def sample(self, rng: np.random.Generator, batch: int) -> np.ndarray:
        if self.kind == "discrete":
            return rng.integers(0, self.n, size=(batch, 1)).astype(np.float64)
        return rng.uniform(self.low, self.high, size=(batch, self.dim))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "discrete":
            return bool(np.all((x >= 0) & (x < self.n) & (x == np.round(x))))
        return bool(np.all((x >= self.low) & (x <= self.high)))

    def compatible(self, other: Space) -> bool:
        if self.kind != other.kind:
            return False
        if self.kind == "discrete":
            return self.n == other.n
        return self.low.shape == other.low.shape and np.array_equal(self.low, other.low) \
            and np.array_equal(self.high, other.high)


def Discrete(n: int) -> Space:
    return Space("discrete", n=int(n))


def Box(low, high, shape=None) -> Space:
    if shape is not None:
        low = np.full(shape, low, dtype=np.float64)
        high = np.full(shape, high, dtype=np.float64)
    return Space("box", low=low, high=high)


class StepResult(NamedTuple):
    observations: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    infos: dict[str, Any]


class VecEnv:
    """Batch of ``num_envs`` identical sub-environments stepped in lockstep.

    Subclasses provide ``_reset_rows`` (draw initial states for a boolean row
    mask) and ``_advance`` (one physics step, returning rewards and a
    termination mask).  The base class handles action validation, time limits
    and auto-reset: rows that finish are reinitialised inside ``step``, the
    returned observation is the fresh one, and the pre-reset observation is
    kept in ``infos["terminal_observation"]`` (for every row).
    """

    name = "vecenv"
    default_max_episode_steps = 1000

    def __init__(self, num_envs: int = 1, seed: int | None = 0, max_episode_steps: int | None = None,
                 device: str = "cpu"):
        if int(num_envs) < 1:
            raise ValueError("num_envs must be >= 1")
        self.num_envs = int(num_envs)
        self.device = device
        self.max_episode_steps = int(max_episode_steps or self.default_max_episode_steps)
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")
        self.rng = np.random.default_rng(seed)
        self.episode_steps = np.zeros(self.num_envs, dtype=np.int64)
        self.params: dict[str, Any] = {}

    observation_space: Space
    action_space: Space

    # -- hooks -----------------------------------------------------------
    def _reset_rows(self, mask: np.ndarray) -> None:
        raise NotImplementedError

    def _observe(self) -> np.ndarray:
        raise NotImplementedError

    def _advance(self, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    # -- public interface ----------------------------------------------
    def reset(self) -> np.ndarray:
        self._reset_rows(np.ones(self.num_envs, dtype=bool))
        self.episode_steps[:] = 0
        return self._observe()

    def _check_actions(self, actions) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.float64)
        space = self.action_space
        if space.kind == "discrete" and actions.shape == (self.num_envs,):
            actions = actions.reshape(self.num_envs, 1)
        if actions.shape != (self.num_envs, space.dim):
            raise ValueError(
                f"{self.name}: actions must have shape {(self.num_envs, space.dim)}, got {actions.shape}")
        if space.kind == "discrete" and not space.contains(actions):
            raise ValueError(f"{self.name}: discrete actions must be integers in [0, {space.n})")
        return actions

    def step(self, actions) -> StepResult:
        actions = self._check_actions(actions)
        rewards, terminated = self._advance(actions)
        self.episode_steps += 1
        truncated = (self.episode_steps >= self.max_episode_steps) & ~terminated
        dones = terminated | truncated
        terminal_obs = self._observe()
        infos = {"terminal_observation": terminal_obs, "terminated": terminated, "truncated": truncated}
        if dones.any():
            self._reset_rows(dones)
            self.episode_steps[dones] = 0
            obs = self._observe()
        else:
            obs = terminal_obs.copy()
        self._extra_infos(infos, actions)
        return StepResult(obs, rewards.astype(np.float64), dones, infos)

    def _extra_infos(self, infos: dict, actions: np.ndarray) -> None:
        pass

    def close(self) -> None:
        pass


class _SingleEnvAdapter(VecEnv):
    """Presents a gym-style single environment as a batch of one."""

    name = "wrapped"

    def __init__(self, source, max_episode_steps=None):
        super().__init__(1, seed=None, max_episode_steps=max_episode_steps or 10**9)
        self.source = source
        self.observation_space = _convert_space(source.observation_space)
        self.action_space = _convert_space(source.action_space)
        self.device = getattr(source, "device", "cpu")
        self._obs = None

    def _as_row(self, obs) -> np.ndarray:
        if isinstance(obs, tuple) and len(obs) == 2 and isinstance(obs[1], dict):
            obs = obs[0]  # gymnasium-style (obs, info)
        return np.asarray(obs, dtype=np.float64).reshape(1, -1)

    def reset(self):
        self._obs = self._as_row(self.source.reset())
        self.episode_steps[:] = 0
        return self._obs.copy()

    def step(self, actions) -> StepResult:
        actions = self._check_actions(actions)
        action = int(actions[0, 0]) if self.action_space.kind == "discrete" else actions[0]
        out = self.source.step(action)
        if len(out) == 5:
            obs, reward, terminated, truncated, info = out
        else:
            obs, reward, done, info = out
            truncated = bool(info.get("TimeLimit.truncated", False)) if isinstance(info, dict) else False
            terminated = bool(done) and not truncated
        self.episode_steps += 1
        truncated = bool(truncated) or (self.episode_steps[0] >= self.max_episode_steps and not terminated)
        terminal_obs = self._as_row(obs)
        done = bool(terminated) or truncated
        infos = {"terminal_observation": terminal_obs, "terminated": np.array([bool(terminated)]),
                 "truncated": np.array([truncated])}
        if done:
            next_obs = self.reset()
        else:
            next_obs = terminal_obs.copy()
        self._obs = next_obs
        return StepResult(next_obs, np.array([float(reward)]), np.array([done]), infos)


class _BatchedAdapter(VecEnv):
    """Passthrough facade for sources that already step a batch."""

    name = "wrapped"

    def __init__(self, source):
        self.source = source
        self.num_envs = int(source.num_envs)
        self.device = getattr(source, "device", "cpu")
        self.observation_space = _convert_space(source.observation_space)
        self.action_space = _convert_space(source.action_space)
        self.params = getattr(source, "params", {})

    def reset(self):
        obs = self.source.reset()
        if isinstance(obs, tuple) and len(obs) == 2 and isinstance(obs[1], dict):
            obs = obs[0]
        return np.asarray(obs, dtype=np.float64).reshape(self.num_envs, -1)

    def step(self, actions) -> StepResult:
        actions = self._check_actions(actions)
        out = self.source.step(actions)
        if isinstance(out, StepResult):
            return out
        if len(out) == 5:
            obs, rewards, terminated, truncated, infos = out
            dones = np.asarray(terminated, bool) | np.asarray(truncated, bool)
        else:
            obs, rewards, dones, infos = out
        infos = dict(infos) if isinstance(infos, dict) else {"raw": infos}
        obs = np.asarray(obs, dtype=np.float64).reshape(self.num_envs, -1)
        dones = np.asarray(dones, dtype=bool).reshape(self.num_envs)
        infos.setdefault("terminal_observation", obs)
        infos.setdefault("truncated", np.zeros(self.num_envs, dtype=bool))
        infos.setdefault("terminated", dones & ~np.asarray(infos["truncated"], bool))
        return StepResult(obs, np.asarray(rewards, dtype=np.float64).reshape(self.num_envs), dones, infos)


def _convert_space(space) -> Space:
    if isinstance(space, Space):
        return space
    if hasattr(space, "n"):
        return Discrete(int(space.n))
    if hasattr(space, "low") and hasattr(space, "high"):
        return Box(np.asarray(space.low, dtype=np.float64), np.asarray(space.high, dtype=np.float64))
    raise TypeError(f"cannot interpret space {space!r}")


def wrap(external_env, max_episode_steps: int | None = None) -> VecEnv:
    """Return a uniform :class:`VecEnv` facade over ``external_env``.

    Objects already exposing ``num_envs`` are passed through batch-wise;
    anything else is treated as a single environment.
    """
    if isinstance(external_env, VecEnv):
        return external_env
    for method in ("reset", "step"):
        if not callable(getattr(external_env, method, None)):
            raise TypeError(f"cannot wrap {type(external_env).__name__}: missing required method '{method}'")
    for attr in ("observation_space", "action_space"):
        if not hasattr(external_env, attr):
            raise TypeError(f"cannot wrap {type(external_env).__name__}: missing attribute '{attr}'")
    if getattr(external_env, "num_envs", None) is not None:
        return _BatchedAdapter(external_env)
    return _SingleEnvAdapter(external_env, max_episode_steps)
