"""Tabular Q-learning and SARSA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..models import instantiate_model, tabular_act
from .base import Agent, linear_schedule


def _check_cell(q_table, s, a):
    n_states, n_actions = q_table.shape
    if not (0 <= s < n_states and 0 <= a < n_actions):
        raise IndexError(f"(state={s}, action={a}) outside table of shape {q_table.shape}")


def qlearning_update(q_table: np.ndarray, s: int, a: int, r: float, s_next: int, done: bool,
                     alpha: float, gamma: float) -> np.ndarray:
    """Q(s,a) += alpha * (r + gamma * max Q(s',.) * (1 - done) - Q(s,a)), in place."""
    _check_cell(q_table, s, a)
    _check_cell(q_table, s_next, 0)
    target = r + gamma * q_table[s_next].max() * (1.0 - float(done))
    q_table[s, a] += alpha * (target - q_table[s, a])
    return q_table


def sarsa_update(q_table: np.ndarray, s: int, a: int, r: float, s_next: int, a_next: int, done: bool,
                 alpha: float, gamma: float) -> np.ndarray:
    """Q(s,a) += alpha * (r + gamma * Q(s',a') * (1 - done) - Q(s,a)), in place."""
    _check_cell(q_table, s, a)
    _check_cell(q_table, s_next, a_next)
    target = r + gamma * q_table[s_next, a_next] * (1.0 - float(done))
    q_table[s, a] += alpha * (target - q_table[s, a])
    return q_table


@dataclass
class TabularConfig:
    learning_rate: float = 0.5
    discount_factor: float = 0.99
    epsilon_initial: float = 1.0
    epsilon_final: float = 0.1
    epsilon_decay_timesteps: int = 10_000


class _TabularAgent(Agent):
    config_cls = TabularConfig

    def __init__(self, observation_space, action_space, cfg=None, **kwargs):
        super().__init__(observation_space, action_space, cfg, **kwargs)
        if observation_space.kind != "discrete" or action_space.kind != "discrete":
            raise ValueError(f"{self.name} needs discrete observation and action spaces")
        self.q = instantiate_model(None, "tabular", num_states=observation_space.n, num_actions=action_space.n)
        self.checkpoint_modules["q"] = self.q
        self.epsilon = self.cfg.epsilon_initial
        self._pending = None

    def act(self, states, timestep, deterministic=False):
        self.epsilon = linear_schedule(self.cfg.epsilon_initial, self.cfg.epsilon_final,
                                       self.cfg.epsilon_decay_timesteps, timestep)
        eps = 0.0 if deterministic else self.epsilon
        return tabular_act(self.q, states, eps, self.rng).reshape(-1, 1).astype(np.float64)

    def greedy_policy(self) -> np.ndarray:
        return np.argmax(self.q.q_table, axis=1)

    def record_transition(self, states, actions, rewards, next_states, terminated, truncated, timestep):
        self._pending = (np.asarray(states).reshape(-1).astype(np.int64),
                         np.asarray(actions).reshape(-1).astype(np.int64),
                         np.asarray(rewards, dtype=np.float64).reshape(-1),
                         np.asarray(next_states).reshape(-1).astype(np.int64),
                         np.asarray(terminated, dtype=bool).reshape(-1))

    def post_interaction(self, timestep):
        if self._pending is not None:
            self._update(timestep)
            self._pending = None


class QLearning(_TabularAgent):
    name = "qlearning"

    def _update(self, timestep):
        s, a, r, s_next, done = self._pending
        for i in range(s.shape[0]):
            qlearning_update(self.q.q_table, s[i], a[i], r[i], s_next[i], done[i],
                             self.cfg.learning_rate, self.cfg.discount_factor)
        self.update_count += 1
        self.track("epsilon", self.epsilon)


class SARSA(_TabularAgent):
    """On-policy TD(0); the next action is drawn from the current epsilon-greedy policy."""

    name = "sarsa"

    def _update(self, timestep):
        s, a, r, s_next, done = self._pending
        a_next = tabular_act(self.q, s_next, self.epsilon, self.rng)
        for i in range(s.shape[0]):
            sarsa_update(self.q.q_table, s[i], a[i], r[i], s_next[i], a_next[i], done[i],
                         self.cfg.learning_rate, self.cfg.discount_factor)
        self.update_count += 1
        self.track("epsilon", self.epsilon)
