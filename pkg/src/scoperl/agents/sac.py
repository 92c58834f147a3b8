"""Soft actor-critic with twin critics and automatic temperature tuning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autograd import Adam, Tensor, minimum, no_grad
from ..models import critic_input, instantiate_model, polyak_update, squashed_gaussian_act
from .base import Agent, InsufficientSamplesError, frozen, model_spec

TRANSITION_NAMES = ("states", "actions", "rewards", "next_states", "terminated")


@dataclass
class SACConfig:
    batch_size: int = 256
    memory_size: int = 100_000
    discount_factor: float = 0.99
    polyak: float = 0.005
    actor_learning_rate: float = 1e-3
    critic_learning_rate: float = 1e-3
    entropy_learning_rate: float = 1e-3
    initial_entropy_value: float = 1.0
    learn_entropy: bool = True
    target_entropy: float | None = None
    learning_starts: int = 1000
    gradient_steps: int = 1
    grad_norm_clip: float | None = None


def temperature_loss(log_alpha: Tensor, log_probs: np.ndarray, target_entropy: float) -> Tensor:
    """-log(alpha) * mean(log pi + target_entropy); descending it lowers alpha when entropy is above target."""
    return -(log_alpha * float(np.mean(log_probs + target_entropy)))


def sac_update(agent: SAC, minibatch: dict) -> dict[str, float]:
    cfg = agent.cfg
    alpha = float(np.exp(agent.log_alpha.data))
    with no_grad():
        next_actions, next_log_probs = squashed_gaussian_act(agent.policy, minibatch["next_states"], agent.rng)
        nxt = critic_input(minibatch["next_states"], next_actions)
        q1_next = agent.target_critic_1(nxt).data.reshape(-1)
        q2_next = agent.target_critic_2(nxt).data.reshape(-1)
    soft_next = np.minimum(q1_next, q2_next) - alpha * next_log_probs.data
    y = minibatch["rewards"].reshape(-1) + cfg.discount_factor * (1.0 - minibatch["terminated"].reshape(-1)) * soft_next

    target = Tensor(y)
    agent.critic_optimizer.zero_grad()
    cur = critic_input(minibatch["states"], minibatch["actions"])
    q1 = agent.critic_1(cur).reshape(-1)
    q2 = agent.critic_2(cur).reshape(-1)
    critic_loss = ((q1 - target).square().mean() + (q2 - target).square().mean()) * 0.5
    critic_loss.backward()
    agent.critic_optimizer.step()

    agent.policy_optimizer.zero_grad()
    with frozen(agent.critic_1, agent.critic_2):
        actions, log_probs = squashed_gaussian_act(agent.policy, minibatch["states"], agent.rng)
        pair = critic_input(minibatch["states"], actions)
        q_pi = minimum(agent.critic_1(pair), agent.critic_2(pair)).reshape(-1)
        actor_loss = (log_probs * alpha - q_pi).mean()
        actor_loss.backward()
    agent.policy_optimizer.step()

    losses = {"loss/critic": critic_loss.item(), "loss/policy": actor_loss.item(), "alpha": alpha,
              "entropy": -float(np.mean(log_probs.data))}
    if cfg.learn_entropy:
        agent.entropy_optimizer.zero_grad()
        ent_loss = temperature_loss(agent.log_alpha, log_probs.data, agent.target_entropy)
        ent_loss.backward()
        agent.entropy_optimizer.step()
        losses["loss/entropy"] = ent_loss.item()

    polyak_update(agent.target_critic_1, agent.critic_1, cfg.polyak)
    polyak_update(agent.target_critic_2, agent.critic_2, cfg.polyak)
    return losses


class SAC(Agent):
    name = "sac"
    config_cls = SACConfig

    def __init__(self, observation_space, action_space, cfg=None, **kwargs):
        super().__init__(observation_space, action_space, cfg, **kwargs)
        if action_space.kind != "box":
            raise ValueError("SAC needs a continuous (box) action space")
        bounds = (action_space.low, action_space.high)
        self.policy = instantiate_model(
            model_spec(self.model_cfg.get("policy"), self.obs_dim, 2 * self.action_dim, output_scale=bounds),
            "gaussian", self._seed(1), state_dependent_std=True, squash=True)
        critic_spec = model_spec(self.model_cfg.get("critic"), self.obs_dim + self.action_dim, 1)
        self.critic_1 = instantiate_model(critic_spec, "deterministic", self._seed(2))
        self.critic_2 = instantiate_model(critic_spec, "deterministic", self._seed(4))
        self.target_critic_1 = self.critic_1.clone()
        self.target_critic_2 = self.critic_2.clone()
        self.log_alpha = Tensor(np.asarray(np.log(self.cfg.initial_entropy_value)), requires_grad=True)
        self.target_entropy = (-float(self.action_dim) if self.cfg.target_entropy is None
                               else float(self.cfg.target_entropy))
        clip = self.cfg.grad_norm_clip
        self.policy_optimizer = Adam(self.policy.parameters(), lr=self.cfg.actor_learning_rate, max_grad_norm=clip)
        self.critic_optimizer = Adam(self.critic_1.parameters() + self.critic_2.parameters(),
                                     lr=self.cfg.critic_learning_rate, max_grad_norm=clip)
        self.entropy_optimizer = Adam([self.log_alpha], lr=self.cfg.entropy_learning_rate)
        self.checkpoint_modules.update(
            policy=self.policy, critic_1=self.critic_1, critic_2=self.critic_2,
            target_critic_1=self.target_critic_1, target_critic_2=self.target_critic_2, log_alpha=self.log_alpha,
            policy_optimizer=self.policy_optimizer, critic_optimizer=self.critic_optimizer,
            entropy_optimizer=self.entropy_optimizer)
        self._register_memory(self.cfg.memory_size, [
            ("states", self.obs_dim, "float"), ("actions", self.action_dim, "float"), ("rewards", 1, "float"),
            ("next_states", self.obs_dim, "float"), ("terminated", 1, "bool")])

    def _warming_up(self) -> bool:
        return self.memory.stored_count < max(self.cfg.batch_size, self.cfg.learning_starts)

    def act(self, states, timestep, deterministic=False):
        if not deterministic and self._warming_up():
            return self.random_actions(states.shape[0])
        with no_grad():
            actions, _ = squashed_gaussian_act(self.policy, states, self.rng, deterministic=deterministic)
        return np.clip(actions.data, self.action_space.low, self.action_space.high)

    def record_transition(self, states, actions, rewards, next_states, terminated, truncated, timestep):
        self.memory.add_samples({"states": states, "actions": actions, "rewards": rewards,
                                 "next_states": next_states, "terminated": terminated})

    def post_interaction(self, timestep):
        if not self._warming_up():
            self._update(timestep)

    def _update(self, timestep):
        if self.memory.stored_count < self.cfg.batch_size:
            raise InsufficientSamplesError(f"sac: need {self.cfg.batch_size} transitions")
        for _ in range(self.cfg.gradient_steps):
            losses = sac_update(self, self.memory.sample(TRANSITION_NAMES, self.cfg.batch_size))
            self.update_count += 1
            for name, value in losses.items():
                self.track(name, value)
