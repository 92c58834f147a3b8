"""Exploration noise for deterministic policies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def gaussian_sample(shape, mean: float, std: float, rng: np.random.Generator) -> np.ndarray:
    if std < 0:
        raise ValueError("std must be non-negative")
    if std == 0:
        return np.full(shape, float(mean))
    return rng.normal(mean, std, size=shape)


@dataclass
class OUState:
    value: np.ndarray
    theta: float = 0.15
    sigma: float = 0.2
    mu: float = 0.0
    dt: float = 1e-2

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.theta < 0 or self.sigma < 0:
            raise ValueError("theta and sigma must be non-negative")


def ou_step(state: OUState, rng: np.random.Generator) -> tuple[np.ndarray, OUState]:
    """Advance x <- x + theta*(mu - x)*dt + sigma*sqrt(dt)*N(0, 1); returns the new value."""
    drift = state.theta * (state.mu - state.value) * state.dt
    shock = state.sigma * np.sqrt(state.dt) * rng.standard_normal(state.value.shape) if state.sigma else 0.0
    state.value = state.value + drift + shock
    return state.value.copy(), state


class GaussianNoise:
    def __init__(self, mean: float = 0.0, std: float = 0.1, seed=None):
        self.mean, self.std = mean, std
        self.rng = np.random.default_rng(seed)

    def sample(self, shape) -> np.ndarray:
        return gaussian_sample(shape, self.mean, self.std, self.rng)

    def reset(self, rows=None) -> None:
        pass


class OrnsteinUhlenbeckNoise:
    """Per-row OU processes; rows are reset to ``mu`` when their episode ends."""

    def __init__(self, theta: float = 0.15, sigma: float = 0.2, mu: float = 0.0, dt: float = 1e-2, seed=None):
        self.theta, self.sigma, self.mu, self.dt = theta, sigma, mu, dt
        self.rng = np.random.default_rng(seed)
        self.state: OUState | None = None

    def sample(self, shape) -> np.ndarray:
        if self.state is None or self.state.value.shape != tuple(shape):
            self.state = OUState(np.full(shape, self.mu), self.theta, self.sigma, self.mu, self.dt)
        value, self.state = ou_step(self.state, self.rng)
        return value

    def reset(self, rows=None) -> None:
        if self.state is None:
            return
        if rows is None:
            self.state.value[...] = self.mu
        else:
            self.state.value[rows] = self.mu


def make_noise(cfg: dict | None, seed=None):
    """Build a noise process from a ``{"type": "gaussian"|"ou", ...}`` block."""
    if not cfg:
        return None
    cfg = dict(cfg)
    kind = cfg.pop("type", "gaussian")
    if kind == "gaussian":
        return GaussianNoise(seed=seed, **cfg)
    if kind in ("ou", "ornstein_uhlenbeck"):
        return OrnsteinUhlenbeckNoise(seed=seed, **cfg)
    raise ValueError(f"unknown noise type {kind!r}")
