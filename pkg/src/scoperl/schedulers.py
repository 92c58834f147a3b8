"""Learning-rate schedulers.

The KL-adaptive rule divides the rate by 1.5 when the measured KL exceeds
twice the threshold and multiplies it by 1.5 when the KL falls below half the
threshold; inside that band the rate is left alone.
"""

from __future__ import annotations

from dataclasses import dataclass

KL_FACTOR = 1.5


@dataclass
class SchedulerState:
    current_lr: float
    min_lr: float = 1e-6
    max_lr: float = 1e-2
    kl_threshold: float = 0.008
    initial_lr: float | None = None

    def __post_init__(self):
        if not (0 < self.min_lr <= self.max_lr):
            raise ValueError("need 0 < min_lr <= max_lr")
        if self.initial_lr is None:
            self.initial_lr = self.current_lr
        self.current_lr = min(max(self.current_lr, self.min_lr), self.max_lr)


def kl_adaptive_update(state: SchedulerState, measured_kl: float) -> float:
    if measured_kl < 0:
        raise ValueError("measured_kl must be non-negative")
    lr = state.current_lr
    if measured_kl > 2.0 * state.kl_threshold:
        lr = lr / KL_FACTOR
    elif measured_kl < 0.5 * state.kl_threshold:
        lr = lr * KL_FACTOR
    state.current_lr = min(max(lr, state.min_lr), state.max_lr)
    return state.current_lr


def linear_update(state: SchedulerState, step: int, total_steps: int) -> float:
    if total_steps <= 0 or not 0 <= step <= total_steps:
        raise ValueError("need 0 <= step <= total_steps and total_steps > 0")
    frac = step / total_steps
    lr = state.initial_lr + frac * (state.min_lr - state.initial_lr)
    state.current_lr = min(max(lr, state.min_lr), state.max_lr)
    return state.current_lr


class ConstantLR:
    def __init__(self, lr: float):
        self.state = SchedulerState(lr, min_lr=lr, max_lr=lr)

    def step(self, **_) -> float:
        return self.state.current_lr


class LinearLR:
    def __init__(self, lr: float, min_lr: float, total_steps: int):
        self.state = SchedulerState(lr, min_lr=min_lr, max_lr=lr)
        self.total_steps = total_steps

    def step(self, step: int = 0, **_) -> float:
        return linear_update(self.state, min(step, self.total_steps), self.total_steps)


class KLAdaptiveLR:
    def __init__(self, lr: float, kl_threshold: float = 0.008, min_lr: float = 1e-6, max_lr: float = 1e-2):
        self.state = SchedulerState(lr, min_lr=min_lr, max_lr=max_lr, kl_threshold=kl_threshold)

    def step(self, kl: float = 0.0, **_) -> float:
        return kl_adaptive_update(self.state, kl)


def make_scheduler(cfg: dict | None, lr: float, total_steps: int = 1):
    """Build a scheduler from a ``{"type": "constant"|"linear"|"kl_adaptive", ...}`` block."""
    if not cfg:
        return None
    cfg = dict(cfg)
    kind = cfg.pop("type")
    if kind == "constant":
        return ConstantLR(lr)
    if kind == "linear":
        return LinearLR(lr, cfg.get("min_lr", 1e-6), cfg.get("total_steps", total_steps))
    if kind == "kl_adaptive":
        return KLAdaptiveLR(lr, **cfg)
    raise ValueError(f"unknown scheduler type {kind!r}")
