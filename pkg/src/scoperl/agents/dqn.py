"""Deep Q-network and its double-Q variant."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autograd import Adam, Tensor, gather_rows, no_grad
from ..models import deterministic_act, instantiate_model, polyak_update
from .base import Agent, InsufficientSamplesError, linear_schedule, model_spec

TRANSITION_NAMES = ("states", "actions", "rewards", "next_states", "terminated")


def dqn_targets(q_next_online: np.ndarray, q_next_target: np.ndarray, rewards: np.ndarray,
                terminated: np.ndarray, gamma: float, double: bool) -> np.ndarray:
    """Bootstrapped targets ``r + gamma * (1 - done) * Q_target(s', a*)``.

    ``a*`` is the target network's argmax for DQN and the online network's
    argmax for double DQN.
    """
    chooser = q_next_online if double else q_next_target
    best = np.argmax(chooser, axis=1)
    bootstrap = q_next_target[np.arange(len(best)), best]
    return rewards.reshape(-1) + gamma * (1.0 - terminated.reshape(-1)) * bootstrap


@dataclass
class DQNConfig:
    batch_size: int = 64
    memory_size: int = 50_000
    discount_factor: float = 0.99
    learning_rate: float = 1e-3
    learning_starts: int = 0
    gradient_steps: int = 1
    update_interval: int = 1
    target_update_interval: int = 500
    polyak: float = 1.0
    epsilon_initial: float = 1.0
    epsilon_final: float = 0.05
    epsilon_decay_timesteps: int = 10_000
    grad_norm_clip: float | None = 10.0
    double: bool = False


def dqn_update(agent: DQN, minibatch: dict, double: bool) -> float:
    """One TD-regression step on ``minibatch``; returns the mean squared TD error."""
    cfg = agent.cfg
    with no_grad():
        q_next_target = deterministic_act(agent.target_q, minibatch["next_states"]).data
        q_next_online = deterministic_act(agent.q, minibatch["next_states"]).data if double else None
    y = dqn_targets(q_next_online, q_next_target, minibatch["rewards"], minibatch["terminated"],
                    cfg.discount_factor, double)
    agent.optimizer.zero_grad()
    q = gather_rows(deterministic_act(agent.q, minibatch["states"]), minibatch["actions"].reshape(-1))
    loss = (q - Tensor(y)).square().mean()
    loss.backward()
    agent.optimizer.step()
    return loss.item()


class DQN(Agent):
    name = "dqn"
    config_cls = DQNConfig

    def __init__(self, observation_space, action_space, cfg=None, **kwargs):
        super().__init__(observation_space, action_space, cfg, **kwargs)
        if action_space.kind != "discrete":
            raise ValueError(f"{self.name} needs a discrete action space")
        spec = model_spec(self.model_cfg.get("q"), self.obs_dim, action_space.n)
        self.q = instantiate_model(spec, "deterministic", self._seed(1))
        self.target_q = self.q.clone()
        self.optimizer = Adam(self.q.parameters(), lr=self.cfg.learning_rate, max_grad_norm=self.cfg.grad_norm_clip)
        self.checkpoint_modules.update(q=self.q, target_q=self.target_q, optimizer=self.optimizer)
        self._register_memory(self.cfg.memory_size, [
            ("states", self.obs_dim, "float"), ("actions", 1, "int"), ("rewards", 1, "float"),
            ("next_states", self.obs_dim, "float"), ("terminated", 1, "bool")])
        self.epsilon = self.cfg.epsilon_initial

    @property
    def double(self) -> bool:
        return self.cfg.double

    def _warming_up(self) -> bool:
        return self.memory.stored_count < max(self.cfg.batch_size, self.cfg.learning_starts)

    def act(self, states, timestep, deterministic=False):
        n = states.shape[0]
        if deterministic:
            with no_grad():
                return np.argmax(deterministic_act(self.q, states).data, axis=1).reshape(-1, 1).astype(np.float64)
        if self._warming_up():
            return self.random_actions(n)
        self.epsilon = linear_schedule(self.cfg.epsilon_initial, self.cfg.epsilon_final,
                                       self.cfg.epsilon_decay_timesteps, timestep)
        with no_grad():
            greedy = np.argmax(deterministic_act(self.q, states).data, axis=1)
        explore = self.rng.random(n) < self.epsilon
        random_actions = self.rng.integers(0, self.action_space.n, size=n)
        return np.where(explore, random_actions, greedy).reshape(-1, 1).astype(np.float64)

    def record_transition(self, states, actions, rewards, next_states, terminated, truncated, timestep):
        self.memory.add_samples({"states": states, "actions": actions, "rewards": rewards,
                                 "next_states": next_states, "terminated": terminated})

    def post_interaction(self, timestep):
        if not self._warming_up() and timestep % self.cfg.update_interval == 0:
            self._update(timestep)

    def _update(self, timestep):
        if self.memory.stored_count < self.cfg.batch_size:
            raise InsufficientSamplesError(f"{self.name}: need {self.cfg.batch_size} transitions")
        for _ in range(self.cfg.gradient_steps):
            batch = self.memory.sample(TRANSITION_NAMES, self.cfg.batch_size)
            loss = dqn_update(self, batch, self.double)
            self.update_count += 1
            self.track("loss/q", loss)
        if timestep % self.cfg.target_update_interval == 0:
            polyak_update(self.target_q, self.q, self.cfg.polyak)
        self.track("epsilon", self.epsilon)


class DDQN(DQN):
    name = "ddqn"

    @property
    def double(self) -> bool:
        return True
