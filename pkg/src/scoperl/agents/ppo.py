"""Proximal policy optimization with GAE and a KL-adaptive learning rate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autograd import Adam, Tensor, minimum, no_grad
from ..models import categorical_act, deterministic_act, gaussian_act, instantiate_model
from ..schedulers import make_scheduler
from .base import Agent, model_spec


def gae(rewards, values, dones, last_values, gamma: float, lam: float, normalize: bool = False):
    """Generalized advantage estimation over ``[T, num_envs]`` arrays.

    Returns ``(advantages, returns)`` where ``returns = advantages + values``
    (computed before any normalisation of the advantages).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if rewards.ndim == 1:
        rewards, values, dones = rewards[:, None], values[:, None], dones[:, None]
    if not (rewards.shape == values.shape == dones.shape):
        raise ValueError(f"gae: length mismatch {rewards.shape}, {values.shape}, {dones.shape}")
    last_values = np.broadcast_to(np.asarray(last_values, dtype=np.float64), rewards.shape[1:])
    advantages = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1:])
    next_values = last_values
    for t in reversed(range(rewards.shape[0])):
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * not_done * next_values - values[t]
        running = delta + gamma * lam * not_done * running
        advantages[t] = running
        next_values = values[t]
    returns = advantages + values
    if normalize:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    return advantages, returns


def clipped_surrogate(ratio: Tensor, advantages: Tensor, clip: float) -> Tensor:
    """mean(min(ratio * A, clip(ratio, 1 - clip, 1 + clip) * A))."""
    return minimum(ratio * advantages, ratio.clamp(1.0 - clip, 1.0 + clip) * advantages).mean()


@dataclass
class PPOConfig:
    rollouts: int = 16
    learning_epochs: int = 8
    mini_batches: int = 4
    discount_factor: float = 0.99
    lambda_: float = 0.95
    learning_rate: float = 3e-4
    learning_rate_scheduler: dict | None = field(
        default_factory=lambda: {"type": "kl_adaptive", "kl_threshold": 0.008})
    ratio_clip: float = 0.2
    value_clip: float = 0.2
    clip_predicted_values: bool = False
    entropy_loss_scale: float = 0.0
    value_loss_scale: float = 1.0
    grad_norm_clip: float | None = 0.5
    normalize_advantages: bool = True
    time_limit_bootstrap: bool = True
    initial_log_std: float = 0.0


class OnPolicyAgent(Agent):
    """Rollout storage and policy scoring shared by PPO and TRPO."""

    def _build_models(self):
        if self.action_space.kind == "discrete":
            spec = model_spec(self.model_cfg.get("policy"), self.obs_dim, self.action_space.n,
                              default_activation="tanh")
            self.policy = instantiate_model(spec, "categorical", self._seed(1), output_gain=0.01)
        else:
            spec = model_spec(self.model_cfg.get("policy"), self.obs_dim, self.action_dim,
                              default_activation="tanh")
            self.policy = instantiate_model(spec, "gaussian", self._seed(1), output_gain=0.01,
                                            initial_log_std=self.cfg.initial_log_std)
        vspec = model_spec(self.model_cfg.get("value"), self.obs_dim, 1, default_activation="tanh")
        self.value = instantiate_model(vspec, "deterministic", self._seed(2))
        self.checkpoint_modules.update(policy=self.policy, value=self.value)
        self.memory = None
        self._register_memory(self.cfg.rollouts, [
            ("states", self.obs_dim, "float"), ("actions", self.action_dim, "float"), ("rewards", 1, "float"),
            ("dones", 1, "bool"), ("log_prob", 1, "float"), ("values", 1, "float"),
            ("advantages", 1, "float"), ("returns", 1, "float")])
        self._last_next_states = None
        self._log_prob = None

    @property
    def discrete(self) -> bool:
        return self.action_space.kind == "discrete"

    def score(self, states, actions=None, deterministic=False):
        """(actions, log_probs, entropy) under the current policy."""
        if self.discrete:
            taken = None if actions is None else actions.reshape(-1)
            acts, logp, ent = categorical_act(self.policy, states, "argmax" if deterministic else "sample",
                                              self.rng, taken_actions=taken)
            return acts.reshape(-1, 1).astype(np.float64), logp, ent
        if deterministic:
            return deterministic_act(self.policy, states).data, None, None
        acts, logp, ent = gaussian_act(self.policy, states, taken_actions=actions, rng=self.rng)
        return acts.data, logp, ent

    def values_of(self, states) -> np.ndarray:
        with no_grad():
            return deterministic_act(self.value, states).data.reshape(-1)

    def act(self, states, timestep, deterministic=False):
        with no_grad():
            actions, logp, _ = self.score(states, deterministic=deterministic)
        if not deterministic:
            self._log_prob = logp.data.copy()
        return actions

    def record_transition(self, states, actions, rewards, next_states, terminated, truncated, timestep):
        rewards = np.asarray(rewards, dtype=np.float64).reshape(-1).copy()
        truncated = np.asarray(truncated, bool).reshape(-1)
        if self.cfg.time_limit_bootstrap and truncated.any():
            rewards[truncated] += self.cfg.discount_factor * self.values_of(next_states[truncated])
        dones = np.asarray(terminated, bool).reshape(-1) | truncated
        self.memory.add_samples({"states": states, "actions": actions, "rewards": rewards, "dones": dones,
                                 "log_prob": self._log_prob, "values": self.values_of(states),
                                 "advantages": np.zeros_like(rewards), "returns": np.zeros_like(rewards)})
        self._last_next_states = np.asarray(next_states, dtype=np.float64)

    def post_interaction(self, timestep):
        if self.memory.cursor == 0 and self.memory.filled:
            self._update(timestep)
            self.memory.reset()

    def compute_advantages(self):
        mem = self.memory
        advantages, returns = gae(mem.get_tensor("rewards")[..., 0], mem.get_tensor("values")[..., 0],
                                  mem.get_tensor("dones")[..., 0], self.values_of(self._last_next_states),
                                  self.cfg.discount_factor, self.cfg.lambda_, self.cfg.normalize_advantages)
        mem.get_tensor("advantages")[..., 0] = advantages
        mem.get_tensor("returns")[..., 0] = returns


class PPO(OnPolicyAgent):
    name = "ppo"
    config_cls = PPOConfig

    def __init__(self, observation_space, action_space, cfg=None, **kwargs):
        super().__init__(observation_space, action_space, cfg, **kwargs)
        self._build_models()
        clip = self.cfg.grad_norm_clip
        self.policy_optimizer = Adam(self.policy.parameters(), lr=self.cfg.learning_rate, max_grad_norm=clip)
        self.value_optimizer = Adam(self.value.parameters(), lr=self.cfg.learning_rate, max_grad_norm=clip)
        self.checkpoint_modules.update(policy_optimizer=self.policy_optimizer, value_optimizer=self.value_optimizer)
        self.scheduler = make_scheduler(self.cfg.learning_rate_scheduler, self.cfg.learning_rate)
        self.epoch_kls: list[float] = []

    def ppo_loss(self, batch):
        """Return ``(total_loss, policy_loss, value_loss, entropy, kl_estimate)`` for one minibatch."""
        cfg = self.cfg
        _, logp, entropy = self.score(batch["states"], batch["actions"])
        old_logp = batch["log_prob"].reshape(-1)
        kl = float(np.mean(old_logp - logp.data))
        ratio = (logp - Tensor(old_logp)).exp()
        advantages = Tensor(batch["advantages"].reshape(-1))
        policy_loss = -clipped_surrogate(ratio, advantages, cfg.ratio_clip)
        predicted = deterministic_act(self.value, batch["states"]).reshape(-1)
        returns = Tensor(batch["returns"].reshape(-1))
        if cfg.clip_predicted_values:
            old_values = Tensor(batch["values"].reshape(-1))
            predicted = old_values + (predicted - old_values).clamp(-cfg.value_clip, cfg.value_clip)
        value_loss = (returns - predicted).square().mean() * cfg.value_loss_scale
        entropy_mean = entropy.mean()
        total = policy_loss + value_loss
        if cfg.entropy_loss_scale:
            total = total - entropy_mean * cfg.entropy_loss_scale
        return total, policy_loss, value_loss, entropy_mean, kl

    def _update(self, timestep):
        if self.memory.stored_count == 0:
            raise ValueError("ppo: empty rollout")
        self.compute_advantages()
        names = ["states", "actions", "log_prob", "values", "advantages", "returns"]
        self.epoch_kls = []
        for _ in range(self.cfg.learning_epochs):
            kls = []
            for batch in self.memory.sample_all(names, self.cfg.mini_batches):
                total, policy_loss, value_loss, entropy, kl = self.ppo_loss(batch)
                kls.append(kl)
                self.policy_optimizer.zero_grad()
                self.value_optimizer.zero_grad()
                total.backward()
                self.policy_optimizer.step()
                self.value_optimizer.step()
                self.track("loss/policy", policy_loss.item())
                self.track("loss/value", value_loss.item())
                self.track("entropy", entropy.item())
            mean_kl = float(np.mean(kls))
            self.epoch_kls.append(mean_kl)
            self.track("kl", mean_kl)
            if self.scheduler is not None:
                lr = self.scheduler.step(kl=max(mean_kl, 0.0), step=timestep)
                self.policy_optimizer.lr = lr
                self.value_optimizer.lr = lr
        self.track("learning_rate", self.policy_optimizer.lr)
        self.update_count += 1
