from __future__ import annotations

from .base import Box, Discrete, Space, StepResult, VecEnv, wrap
from .classic import CartPole, Echo, GridWorld, Pendulum

ENVIRONMENTS = {
    "cartpole": CartPole,
    "pendulum": Pendulum,
    "gridworld": GridWorld,
    "echo": Echo,
}

_COMMON_PARAMS = {"max_episode_steps", "device"}
_ENV_PARAMS = {
    "cartpole": set(),
    "pendulum": set(),
    "gridworld": {"size"},
    "echo": {"action_dim", "bound"},
}


def make_env(name: str, num_envs: int = 1, seed: int | None = 0, params: dict | None = None, **kwargs) -> VecEnv:
    """Build one of the bundled vectorized environments by name."""
    if name not in ENVIRONMENTS:
        raise ValueError(f"unknown environment {name!r}; expected one of {sorted(ENVIRONMENTS)}")
    params = {**(params or {}), **kwargs}
    unknown = set(params) - _COMMON_PARAMS - _ENV_PARAMS[name]
    if unknown:
        raise ValueError(f"{name}: unknown parameter(s) {sorted(unknown)}")
    env = ENVIRONMENTS[name](num_envs=num_envs, seed=seed, **params)
    env.params = dict(params)
    return env


__all__ = ["Box", "CartPole", "Discrete", "ENVIRONMENTS", "Echo", "GridWorld", "Pendulum", "Space", "StepResult",
           "VecEnv", "make_env", "wrap"]
