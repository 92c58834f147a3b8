"""Deep deterministic policy gradient."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autograd import Adam, Tensor, no_grad
from ..models import critic_input, deterministic_act, instantiate_model, polyak_update
from ..noise import make_noise
from .base import Agent, InsufficientSamplesError, frozen, model_spec

TRANSITION_NAMES = ("states", "actions", "rewards", "next_states", "terminated")


@dataclass
class DDPGConfig:
    batch_size: int = 256
    memory_size: int = 100_000
    discount_factor: float = 0.99
    polyak: float = 0.005
    actor_learning_rate: float = 1e-3
    critic_learning_rate: float = 1e-3
    learning_starts: int = 1000
    gradient_steps: int = 1
    grad_norm_clip: float | None = None
    exploration_noise: dict = field(default_factory=lambda: {"type": "gaussian", "std": 0.1})


def ddpg_update(agent: DDPG, minibatch: dict) -> tuple[float, float]:
    cfg = agent.cfg
    with no_grad():
        next_actions = deterministic_act(agent.target_policy, minibatch["next_states"])
        q_next = agent.target_critic(critic_input(minibatch["next_states"], next_actions)).data.reshape(-1)
    y = minibatch["rewards"].reshape(-1) + cfg.discount_factor * (1.0 - minibatch["terminated"].reshape(-1)) * q_next

    agent.critic_optimizer.zero_grad()
    q = agent.critic(critic_input(minibatch["states"], minibatch["actions"])).reshape(-1)
    critic_loss = (q - Tensor(y)).square().mean()
    critic_loss.backward()
    agent.critic_optimizer.step()

    agent.policy_optimizer.zero_grad()
    with frozen(agent.critic):
        actions = deterministic_act(agent.policy, minibatch["states"])
        actor_loss = -agent.critic(critic_input(minibatch["states"], actions)).mean()
        actor_loss.backward()
    agent.policy_optimizer.step()

    polyak_update(agent.target_policy, agent.policy, cfg.polyak)
    polyak_update(agent.target_critic, agent.critic, cfg.polyak)
    return critic_loss.item(), actor_loss.item()


class DDPG(Agent):
    name = "ddpg"
    config_cls = DDPGConfig

    def __init__(self, observation_space, action_space, cfg=None, **kwargs):
        super().__init__(observation_space, action_space, cfg, **kwargs)
        if action_space.kind != "box":
            raise ValueError(f"{self.name} needs a continuous (box) action space")
        bounds = (action_space.low, action_space.high)
        self.policy = instantiate_model(
            model_spec(self.model_cfg.get("policy"), self.obs_dim, self.action_dim, output_scale=bounds),
            "deterministic", self._seed(1))
        self._build_critics()
        self.target_policy = self.policy.clone()
        self.policy_optimizer = Adam(self.policy.parameters(), lr=self.cfg.actor_learning_rate,
                                     max_grad_norm=self.cfg.grad_norm_clip)
        self.checkpoint_modules.update(policy=self.policy, target_policy=self.target_policy,
                                       policy_optimizer=self.policy_optimizer)
        self.noise = make_noise(self.cfg.exploration_noise, seed=self._seed(3))
        self._register_memory(self.cfg.memory_size, [
            ("states", self.obs_dim, "float"), ("actions", self.action_dim, "float"), ("rewards", 1, "float"),
            ("next_states", self.obs_dim, "float"), ("terminated", 1, "bool")])

    def _critic_spec(self):
        return model_spec(self.model_cfg.get("critic"), self.obs_dim + self.action_dim, 1)

    def _build_critics(self):
        self.critic = instantiate_model(self._critic_spec(), "deterministic", self._seed(2))
        self.target_critic = self.critic.clone()
        self.critic_optimizer = Adam(self.critic.parameters(), lr=self.cfg.critic_learning_rate,
                                     max_grad_norm=self.cfg.grad_norm_clip)
        self.checkpoint_modules.update(critic=self.critic, target_critic=self.target_critic,
                                       critic_optimizer=self.critic_optimizer)

    def _warming_up(self) -> bool:
        return self.memory.stored_count < max(self.cfg.batch_size, self.cfg.learning_starts)

    def act(self, states, timestep, deterministic=False):
        if not deterministic and self._warming_up():
            return self.random_actions(states.shape[0])
        with no_grad():
            actions = deterministic_act(self.policy, states).data
        if not deterministic and self.noise is not None:
            actions = actions + self.noise.sample(actions.shape)
        return np.clip(actions, self.action_space.low, self.action_space.high)

    def record_transition(self, states, actions, rewards, next_states, terminated, truncated, timestep):
        self.memory.add_samples({"states": states, "actions": actions, "rewards": rewards,
                                 "next_states": next_states, "terminated": terminated})
        if self.noise is not None:
            self.noise.reset(np.asarray(terminated, bool) | np.asarray(truncated, bool))

    def post_interaction(self, timestep):
        if not self._warming_up():
            self._update(timestep)

    def _sample(self):
        if self.memory.stored_count < self.cfg.batch_size:
            raise InsufficientSamplesError(f"{self.name}: need {self.cfg.batch_size} transitions")
        return self.memory.sample(TRANSITION_NAMES, self.cfg.batch_size)

    def _update(self, timestep):
        for _ in range(self.cfg.gradient_steps):
            critic_loss, actor_loss = ddpg_update(self, self._sample())
            self.update_count += 1
            self.track("loss/critic", critic_loss)
            self.track("loss/policy", actor_loss)
