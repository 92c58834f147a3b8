"""Twin delayed DDPG."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autograd import Adam, Tensor, no_grad
from ..models import critic_input, deterministic_act, instantiate_model, polyak_update
from .base import frozen
from .ddpg import DDPG, DDPGConfig


@dataclass
class TD3Config(DDPGConfig):
    policy_delay: int = 2
    smooth_noise_std: float = 0.2
    smooth_noise_clip: float = 0.5


def smoothing_noise(rng: np.random.Generator, shape, std: float, clip: float) -> np.ndarray:
    return np.clip(rng.normal(0.0, std, size=shape) if std > 0 else np.zeros(shape), -clip, clip)


def td3_update(agent: TD3, minibatch: dict, step: int) -> dict[str, float]:
    """Critic regression every call; actor and target updates when ``step % policy_delay == 0``."""
    cfg = agent.cfg
    low, high = agent.action_space.low, agent.action_space.high
    with no_grad():
        next_actions = deterministic_act(agent.target_policy, minibatch["next_states"]).data
        noise = smoothing_noise(agent.rng, next_actions.shape, cfg.smooth_noise_std, cfg.smooth_noise_clip)
        next_actions = np.clip(next_actions + noise, low, high)
        nxt = critic_input(minibatch["next_states"], next_actions)
        q1_next = agent.target_critic_1(nxt).data.reshape(-1)
        q2_next = agent.target_critic_2(nxt).data.reshape(-1)
    y = minibatch["rewards"].reshape(-1) + cfg.discount_factor * (1.0 - minibatch["terminated"].reshape(-1)) \
        * np.minimum(q1_next, q2_next)

    target = Tensor(y)
    agent.critic_optimizer.zero_grad()
    cur = critic_input(minibatch["states"], minibatch["actions"])
    q1 = agent.critic_1(cur).reshape(-1)
    q2 = agent.critic_2(cur).reshape(-1)
    critic_loss = (q1 - target).square().mean() + (q2 - target).square().mean()
    critic_loss.backward()
    agent.critic_optimizer.step()
    losses = {"loss/critic": critic_loss.item()}

    if step % cfg.policy_delay == 0:
        agent.policy_optimizer.zero_grad()
        with frozen(agent.critic_1):
            actions = deterministic_act(agent.policy, minibatch["states"])
            actor_loss = -agent.critic_1(critic_input(minibatch["states"], actions)).mean()
            actor_loss.backward()
        agent.policy_optimizer.step()
        agent.actor_updates += 1
        polyak_update(agent.target_policy, agent.policy, cfg.polyak)
        polyak_update(agent.target_critic_1, agent.critic_1, cfg.polyak)
        polyak_update(agent.target_critic_2, agent.critic_2, cfg.polyak)
        losses["loss/policy"] = actor_loss.item()
    return losses


class TD3(DDPG):
    name = "td3"
    config_cls = TD3Config

    def _build_critics(self):
        self.critic_1 = instantiate_model(self._critic_spec(), "deterministic", self._seed(2))
        self.critic_2 = instantiate_model(self._critic_spec(), "deterministic", self._seed(4))
        self.target_critic_1 = self.critic_1.clone()
        self.target_critic_2 = self.critic_2.clone()
        self.critic_optimizer = Adam(self.critic_1.parameters() + self.critic_2.parameters(),
                                     lr=self.cfg.critic_learning_rate, max_grad_norm=self.cfg.grad_norm_clip)
        self.checkpoint_modules.update(critic_1=self.critic_1, critic_2=self.critic_2,
                                       target_critic_1=self.target_critic_1, target_critic_2=self.target_critic_2,
                                       critic_optimizer=self.critic_optimizer)
        self.critic_updates = 0
        self.actor_updates = 0

    def _update(self, timestep):
        for _ in range(self.cfg.gradient_steps):
            self.critic_updates += 1
            losses = td3_update(self, self._sample(), self.critic_updates)
            self.update_count += 1
            for name, value in losses.items():
                self.track(name, value)
