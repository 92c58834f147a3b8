"""Cross-entropy method over a categorical policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autograd import Adam
from ..models import categorical_act, instantiate_model
from .base import Agent, model_spec


def elite_indices(episode_returns, elite_fraction: float) -> np.ndarray:
    """Indices of episodes whose return is at least the (1 - elite_fraction) quantile."""
    if not 0 < elite_fraction <= 1:
        raise ValueError("elite_fraction must lie in (0, 1]")
    returns = np.asarray(episode_returns, dtype=np.float64)
    if returns.size == 0:
        raise ValueError("no complete episodes")
    threshold = np.quantile(returns, 1.0 - elite_fraction)
    return np.flatnonzero(returns >= threshold)


def cem_update(policy, optimizer: Adam, episode_returns, episode_transitions, elite_fraction: float) -> float:
    """One optimiser step of negative log-likelihood on the elite episodes' (state, action) pairs.

    ``episode_transitions`` holds one ``(states [T, obs_dim], actions [T])`` pair per episode.
    """
    if len(episode_transitions) == 0:
        raise ValueError("no complete episodes")
    elite = elite_indices(episode_returns, elite_fraction)
    states = np.concatenate([episode_transitions[i][0] for i in elite])
    actions = np.concatenate([np.asarray(episode_transitions[i][1]).reshape(-1) for i in elite])
    optimizer.zero_grad()
    _, log_probs, _ = categorical_act(policy, states, taken_actions=actions)
    loss = -log_probs.mean()
    loss.backward()
    optimizer.step()
    return loss.item()


@dataclass
class CEMConfig:
    rollouts: int = 1024
    learning_epochs: int = 1
    elite_fraction: float = 0.2
    learning_rate: float = 1e-2


class CEM(Agent):
    name = "cem"
    config_cls = CEMConfig

    def __init__(self, observation_space, action_space, cfg=None, **kwargs):
        super().__init__(observation_space, action_space, cfg, **kwargs)
        if action_space.kind != "discrete":
            raise ValueError("CEM needs a discrete action space")
        spec = model_spec(self.model_cfg.get("policy"), self.obs_dim, action_space.n)
        self.policy = instantiate_model(spec, "categorical", self._seed(1))
        self.optimizer = Adam(self.policy.parameters(), lr=self.cfg.learning_rate)
        self.checkpoint_modules.update(policy=self.policy, optimizer=self.optimizer)
        self.memory = None
        self._register_memory(self.cfg.rollouts, [("states", self.obs_dim, "float"), ("actions", 1, "int"),
                                                  ("rewards", 1, "float"), ("dones", 1, "bool")])
        self._fresh = np.ones(self.num_envs, dtype=bool)

    def act(self, states, timestep, deterministic=False):
        mode = "argmax" if deterministic else "sample"
        actions, _, _ = categorical_act(self.policy, states, mode=mode, rng=self.rng)
        return actions.reshape(-1, 1).astype(np.float64)

    def record_transition(self, states, actions, rewards, next_states, terminated, truncated, timestep):
        dones = np.asarray(terminated, bool) | np.asarray(truncated, bool)
        self.memory.add_samples({"states": states, "actions": actions, "rewards": rewards, "dones": dones})

    def post_interaction(self, timestep):
        if self.memory.cursor == 0 and self.memory.filled:
            self._update(timestep)

    def collect_episodes(self):
        """Split the rollout into per-environment episodes, keeping only complete ones."""
        states = self.memory.get_tensor("states")
        actions = self.memory.get_tensor("actions")[..., 0]
        rewards = self.memory.get_tensor("rewards")[..., 0]
        dones = self.memory.get_tensor("dones")[..., 0] > 0.5
        returns, transitions = [], []
        for env in range(self.num_envs):
            start, complete_head = 0, self._fresh[env]
            for t in np.flatnonzero(dones[:, env]):
                if complete_head:
                    returns.append(rewards[start:t + 1, env].sum())
                    transitions.append((states[start:t + 1, env], actions[start:t + 1, env]))
                start, complete_head = t + 1, True
        self._fresh = dones[-1].copy()
        return returns, transitions

    def _update(self, timestep):
        returns, transitions = self.collect_episodes()
        self.memory.reset()
        if not returns:
            return
        for _ in range(self.cfg.learning_epochs):
            loss = cem_update(self.policy, self.optimizer, returns, transitions, self.cfg.elite_fraction)
            self.track("loss/policy", loss)
        self.update_count += 1
