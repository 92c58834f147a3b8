"""Trust region policy optimization.

Fisher-vector products are finite differences of first-order KL gradients,
so no second-order differentiation is needed.  A policy step is committed
only when the backtracking line search finds a point that improves the
surrogate and keeps the mean KL within ``max_kl``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..autograd import Adam, Tensor, backward, log_softmax, no_grad, zero_grads
from ..models import deterministic_act
from .ppo import OnPolicyAgent

log = logging.getLogger(__name__)


def conjugate_gradient(apply_A: Callable[[np.ndarray], np.ndarray], b: np.ndarray, max_iters: int = 10,
                       residual_tol: float = 1e-10) -> np.ndarray:
    """Approximately solve ``A x = b`` for symmetric positive-definite ``A``."""
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    rr = float(r @ r)
    for _ in range(max_iters):
        if rr <= residual_tol:
            break
        Ap = apply_A(p)
        if not np.all(np.isfinite(Ap)):
            raise FloatingPointError("conjugate_gradient: operator returned non-finite values")
        alpha = rr / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("conjugate_gradient: non-finite solution")
    return x


def finite_difference_fvp(grad_kl: Callable[[np.ndarray], np.ndarray], theta: np.ndarray, damping: float,
                          eps: float = 1e-6) -> Callable[[np.ndarray], np.ndarray]:
    """Return ``v -> (grad_kl(theta + eps*u) - grad_kl(theta)) / eps * |v| + damping * v`` with ``u = v/|v|``."""
    base = grad_kl(theta)

    def apply(v: np.ndarray) -> np.ndarray:
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            return damping * v
        return (grad_kl(theta + eps * v / norm) - base) / eps * norm + damping * v

    return apply


def natural_gradient_direction(grad_kl, theta, g, damping=0.1, eps=1e-6, cg_iters=10):
    return conjugate_gradient(finite_difference_fvp(grad_kl, theta, damping, eps), g, cg_iters)


def flat_params(params) -> np.ndarray:
    return np.concatenate([p.data.reshape(-1) for p in params])


def set_flat_params(params, flat: np.ndarray) -> None:
    i = 0
    for p in params:
        n = p.size
        p.data[...] = flat[i:i + n].reshape(p.shape)
        i += n


def flat_grads(params) -> np.ndarray:
    return np.concatenate([(np.zeros(p.shape) if p.grad is None else p.grad).reshape(-1) for p in params])


@dataclass
class TRPOConfig:
    rollouts: int = 64
    learning_epochs: int = 8
    mini_batches: int = 4
    discount_factor: float = 0.99
    lambda_: float = 0.97
    value_learning_rate: float = 1e-3
    max_kl: float = 0.01
    damping: float = 0.1
    fvp_eps: float = 1e-6
    conjugate_gradient_steps: int = 10
    max_backtrack_steps: int = 10
    step_fraction: float = 0.8
    grad_norm_clip: float | None = 0.5
    normalize_advantages: bool = True
    time_limit_bootstrap: bool = True
    initial_log_std: float = 0.0


class TRPO(OnPolicyAgent):
    name = "trpo"
    config_cls = TRPOConfig

    def __init__(self, observation_space, action_space, cfg=None, **kwargs):
        super().__init__(observation_space, action_space, cfg, **kwargs)
        self._build_models()
        self.value_optimizer = Adam(self.value.parameters(), lr=self.cfg.value_learning_rate,
                                    max_grad_norm=self.cfg.grad_norm_clip)
        self.checkpoint_modules["value_optimizer"] = self.value_optimizer
        self.committed_kls: list[float] = []

    # -- policy divergence -------------------------------------------------
    def _old_distribution(self, states):
        with no_grad():
            if self.discrete:
                return log_softmax(self.policy.forward(states)).data
            mean, log_std = self.policy.gaussian_params(states)
            return mean.data, np.broadcast_to(log_std.data, mean.shape).copy()

    def kl_divergence(self, states, old) -> Tensor:
        """Mean KL(old || current) over ``states``."""
        if self.discrete:
            new_logp = log_softmax(self.policy.forward(states))
            old_p = np.exp(old)
            return (Tensor(old_p * old) - new_logp * old_p).sum(axis=-1).mean()
        old_mean, old_log_std = old
        mean, log_std = self.policy.gaussian_params(states)
        spread = Tensor(np.exp(2 * old_log_std)) + (mean - Tensor(old_mean)).square()
        kl = log_std - Tensor(old_log_std) + spread / ((log_std * 2.0).exp() * 2.0) - 0.5
        return kl.sum(axis=-1).mean()

    def surrogate(self, batch) -> Tensor:
        _, logp, _ = self.score(batch["states"], batch["actions"])
        ratio = (logp - Tensor(batch["log_prob"].reshape(-1))).exp()
        return (ratio * Tensor(batch["advantages"].reshape(-1))).mean()

    def _grad_of(self, fn, params) -> np.ndarray:
        zero_grads(params)
        backward(fn())
        g = flat_grads(params)
        zero_grads(params)
        return g

    # -- update ------------------------------------------------------------
    def trpo_policy_step(self, batch) -> bool:
        """Natural-gradient step with backtracking; returns whether a step was committed."""
        cfg = self.cfg
        params = self.policy.parameters()
        theta = flat_params(params)
        old = self._old_distribution(batch["states"])
        g = self._grad_of(lambda: self.surrogate(batch), params)
        if not np.any(g):
            self.track("policy_improved", 0.0)
            return False

        def grad_kl(flat):
            set_flat_params(params, flat)
            out = self._grad_of(lambda: self.kl_divergence(batch["states"], old), params)
            set_flat_params(params, theta)
            return out

        try:
            direction = natural_gradient_direction(grad_kl, theta, g, cfg.damping, cfg.fvp_eps,
                                                   cfg.conjugate_gradient_steps)
        except FloatingPointError as exc:
            log.warning("trpo: skipping update (%s)", exc)
            set_flat_params(params, theta)
            return False
        fvp = finite_difference_fvp(grad_kl, theta, cfg.damping, cfg.fvp_eps)
        shs = float(direction @ fvp(direction))
        if not np.isfinite(shs) or shs <= 0:
            log.warning("trpo: skipping update (degenerate curvature %r)", shs)
            return False
        full_step = np.sqrt(2.0 * cfg.max_kl / shs) * direction
        with no_grad():
            old_surrogate = self.surrogate(batch).item()
        for i in range(cfg.max_backtrack_steps):
            candidate = theta + cfg.step_fraction**i * full_step
            set_flat_params(params, candidate)
            with no_grad():
                new_surrogate = self.surrogate(batch).item()
                kl = self.kl_divergence(batch["states"], old).item()
            if np.isfinite(new_surrogate) and kl <= cfg.max_kl and new_surrogate > old_surrogate:
                self.committed_kls.append(kl)
                self.track("kl", kl)
                self.track("policy_improved", 1.0)
                return True
        set_flat_params(params, theta)
        self.track("policy_improved", 0.0)
        return False

    def fit_value(self) -> float:
        losses = []
        for _ in range(self.cfg.learning_epochs):
            for batch in self.memory.sample_all(["states", "returns"], self.cfg.mini_batches):
                self.value_optimizer.zero_grad()
                predicted = deterministic_act(self.value, batch["states"]).reshape(-1)
                loss = (predicted - Tensor(batch["returns"].reshape(-1))).square().mean()
                loss.backward()
                self.value_optimizer.step()
                losses.append(loss.item())
        return float(np.mean(losses))

    def trpo_update(self) -> tuple[bool, float]:
        if self.memory.stored_count == 0:
            raise ValueError("trpo: empty rollout")
        self.compute_advantages()
        batch = self.memory.stored()
        improved = self.trpo_policy_step(batch)
        value_loss = self.fit_value()
        self.track("loss/value", value_loss)
        self.update_count += 1
        return improved, value_loss

    def _update(self, timestep):
        self.trpo_update()
