"""Gradient-based optimizers and gradient utilities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import ShapeError, Tensor


@dataclass
class OptimState:
    """Adam moment accumulators, one pair per parameter."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    learning_rate: float
    step_count: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], learning_rate: float) -> OptimState:
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
        )


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray | None],
    state: OptimState,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_hat: float = 1e-8,
) -> tuple[Sequence[np.ndarray], OptimState]:
    """Apply one bias-corrected Adam update to ``params`` in place.

    ``None`` entries in ``grads`` are treated as zero gradients.
    """
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ValueError("betas must lie in [0, 1)")
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("adam_step: params, grads and state differ in length")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    lr = state.learning_rate
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if g is None:
            g = 0.0
        elif g.shape != p.shape:
            raise ShapeError(f"adam_step: grad shape {g.shape} does not match param shape {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps_hat)
    return params, state


def clip_grad_norm(grads: Sequence[np.ndarray | None], max_norm: float) -> tuple[list, float]:
    """Scale ``grads`` so their global L2 norm is at most ``max_norm``.

    Returns the (possibly) rescaled gradients and the norm before scaling.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = float(np.sqrt(sum(float(np.sum(np.square(g))) for g in grads if g is not None)))
    if norm > max_norm:
        scale = max_norm / norm
        return [None if g is None else g * scale for g in grads], norm
    return list(grads), norm


class Adam:
    """Adam over a list of leaf tensors, reading their ``.grad`` fields."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 max_grad_norm: float | None = None):
        self.params = list(params)
        self.betas = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.state = OptimState.zeros_like([p.data for p in self.params], lr)

    @property
    def lr(self) -> float:
        return self.state.learning_rate

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.learning_rate = value

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> float | None:
        """Update parameters; returns the pre-clip gradient norm when clipping is enabled."""
        grads = [p.grad for p in self.params]
        norm = None
        if self.max_grad_norm is not None:
            grads, norm = clip_grad_norm(grads, self.max_grad_norm)
        adam_step([p.data for p in self.params], grads, self.state, self.betas[0], self.betas[1], self.eps)
        return norm

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"step_count": np.asarray(float(self.state.step_count)), "lr": np.asarray(self.state.learning_rate)}
        for i, (m, v) in enumerate(zip(self.state.first_moment, self.state.second_moment)):
            out[f"m{i}"] = m.copy()
            out[f"v{i}"] = v.copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.state.step_count = int(state["step_count"])
        self.state.learning_rate = float(state["lr"])
        for i in range(len(self.params)):
            self.state.first_moment[i][...] = state[f"m{i}"]
            self.state.second_moment[i][...] = state[f"v{i}"]
