"""Function approximators and policy heads.

A :class:`Model` is a plain multilayer perceptron (or a Q-table) plus a head
kind that decides how its output is turned into actions:

* ``categorical`` - logits over discrete actions
* ``gaussian`` - diagonal Gaussian; the log-std is either a free parameter
  vector or the second half of the network output (``state_dependent_std``),
  optionally squashed through tanh
* ``deterministic`` - raw output, or tanh-squashed into ``output_scale`` bounds
* ``tabular`` - a ``[num_states, num_actions]`` Q-table
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .autograd import Tensor, concat, gather_rows, log_softmax, no_grad
from .autograd import tensor as T

HEAD_KINDS = ("categorical", "gaussian", "deterministic", "tabular")
ACTIVATIONS = ("tanh", "relu")
LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


@dataclass
class ModelSpec:
    input_dim: int
    output_dim: int
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    activation: str | list[str] = "tanh"
    output_scale: tuple | None = None

    def activations(self) -> list[str]:
        if isinstance(self.activation, str):
            return [self.activation] * len(self.hidden)
        return list(self.activation)

    def validate(self) -> None:
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if any(int(w) < 1 for w in self.hidden):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden}")
        acts = self.activations()
        if len(acts) != len(self.hidden):
            raise ValueError("one activation per hidden layer is required")
        bad = [a for a in acts if a not in ACTIVATIONS]
        if bad:
            raise ValueError(f"unsupported activation(s) {bad}; expected {ACTIVATIONS}")
        if self.output_scale is not None:
            low, high = (np.broadcast_to(np.asarray(b, dtype=np.float64), (self.output_dim,))
                         for b in self.output_scale)
            if not np.all(low < high):
                raise ValueError("output_scale needs low < high")

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.output_scale is not None:
            out["output_scale"] = [np.asarray(b, dtype=float).tolist() for b in self.output_scale]
        return out


class Model:
    def __init__(self, spec: ModelSpec | None, head_kind: str, *, state_dependent_std: bool = False,
                 squash: bool = False):
        self.spec = spec
        self.head_kind = head_kind
        self.state_dependent_std = state_dependent_std
        self.squash = squash
        self.params: dict[str, Tensor] = {}
        self.q_table: np.ndarray | None = None
        self._layers: list[tuple[Tensor, Tensor, str | None]] = []
        self.low = self.high = None
        if spec is not None and spec.output_scale is not None:
            self.low, self.high = (np.broadcast_to(np.asarray(b, dtype=np.float64), (self.action_dim,)).copy()
                                   for b in spec.output_scale)

    @property
    def action_dim(self) -> int:
        if self.head_kind == "tabular":
            return self.q_table.shape[1]
        if self.head_kind == "gaussian" and self.state_dependent_std:
            return self.spec.output_dim // 2
        return self.spec.output_dim

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        if self.head_kind == "tabular":
            return int(self.q_table.size)
        return sum(p.size for p in self.params.values())

    def forward(self, obs) -> Tensor:
        h = obs if isinstance(obs, Tensor) else Tensor(np.asarray(obs, dtype=np.float64))
        if h.ndim == 1:
            h = h.reshape(1, -1)
        for weight, bias, act in self._layers:
            h = h @ weight + bias
            if act == "tanh":
                h = h.tanh()
            elif act == "relu":
                h = h.relu()
        return h

    __call__ = forward

    def gaussian_params(self, obs) -> tuple[Tensor, Tensor]:
        """Mean and clamped log-std for a Gaussian head."""
        out = self.forward(obs)
        if self.state_dependent_std:
            d = self.action_dim
            mean, log_std = out[:, :d], out[:, d:]
        else:
            mean, log_std = out, self.params["log_std"]
        return mean, log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)

    def state_dict(self) -> dict[str, np.ndarray]:
        if self.head_kind == "tabular":
            return {"q_table": self.q_table.copy()}
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        if set(own) != set(state):
            raise ValueError(f"state keys differ: expected {sorted(own)}, got {sorted(state)}")
        for name, value in state.items():
            if np.shape(value) != own[name].shape:
                raise ValueError(f"{name}: shape {np.shape(value)} does not match {own[name].shape}")
        if self.head_kind == "tabular":
            self.q_table[...] = state["q_table"]
        else:
            for name, value in state.items():
                self.params[name].data[...] = value

    def clone(self) -> Model:
        twin = copy.deepcopy(self)
        for p in twin.params.values():
            p.grad = None
        return twin


def instantiate_model(spec: ModelSpec | None, head_kind: str, seed: int | None = 0, *,
                      num_states: int | None = None, num_actions: int | None = None,
                      state_dependent_std: bool = False, squash: bool = False, initial_log_std: float = 0.0,
                      output_gain: float = 1.0) -> Model:
    """Build a model whose weights and biases are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    ``output_gain`` rescales the initial output layer (small values give near-uniform
    initial policies).  Tabular heads take ``num_states``/``num_actions`` and start at zero.
    """
    if head_kind not in HEAD_KINDS:
        raise ValueError(f"unknown head kind {head_kind!r}")
    if head_kind == "tabular":
        if not num_states or not num_actions or num_states < 1 or num_actions < 1:
            raise ValueError("tabular models need positive num_states and num_actions")
        model = Model(None, "tabular")
        model.q_table = np.zeros((int(num_states), int(num_actions)))
        return model
    if spec is None:
        raise ValueError(f"{head_kind} head requires a ModelSpec")
    spec.validate()
    if spec.output_scale is not None and head_kind == "categorical":
        raise ValueError("output_scale is meaningless for a categorical head")
    if state_dependent_std and (head_kind != "gaussian" or spec.output_dim % 2):
        raise ValueError("state_dependent_std needs a gaussian head with an even output_dim (mean, log_std)")
    if squash and head_kind != "gaussian":
        raise ValueError("squash applies to gaussian heads only")
    model = Model(spec, head_kind, state_dependent_std=state_dependent_std, squash=squash)
    rng = np.random.default_rng(seed)
    widths = [spec.input_dim, *[int(w) for w in spec.hidden], spec.output_dim]
    acts = [*spec.activations(), None]
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = 1.0 / math.sqrt(fan_in)
        gain = output_gain if i == len(widths) - 2 else 1.0
        weight = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)) * gain, requires_grad=True)
        bias = Tensor(rng.uniform(-bound, bound, size=(fan_out,)) * gain, requires_grad=True)
        model.params[f"layer{i}.weight"] = weight
        model.params[f"layer{i}.bias"] = bias
        model._layers.append((weight, bias, acts[i]))
    if head_kind == "gaussian" and not state_dependent_std:
        model.params["log_std"] = Tensor(np.full(spec.output_dim, float(initial_log_std)), requires_grad=True)
    return model


# ----------------------------------------------------------------------------
# policy heads
# ----------------------------------------------------------------------------


def categorical_act(model: Model, obs, mode: str = "sample", rng: np.random.Generator | None = None,
                    taken_actions=None):
    """Return ``(actions, log_probs, entropy)`` for a categorical head.

    ``actions`` is an int array of shape ``[B]``; log-probs and entropy are
    differentiable ``[B]`` tensors.  When ``taken_actions`` is given those
    actions are scored instead of choosing new ones.
    """
    log_p = log_softmax(model.forward(obs), axis=-1)
    if taken_actions is not None:
        actions = np.asarray(taken_actions).reshape(-1).astype(np.int64)
    elif mode == "argmax":
        actions = np.argmax(log_p.data, axis=-1)
    elif mode == "sample":
        rng = rng if rng is not None else np.random.default_rng()
        cdf = np.cumsum(np.exp(log_p.data), axis=-1)
        u = rng.random((cdf.shape[0], 1)) * cdf[:, -1:]
        actions = np.minimum((u >= cdf).sum(axis=-1), cdf.shape[1] - 1)
    else:
        raise ValueError(f"mode must be 'sample' or 'argmax', got {mode!r}")
    log_probs = gather_rows(log_p, actions)
    entropy = -(log_p.exp() * log_p).sum(axis=-1)
    return actions, log_probs, entropy


def _normal_log_prob(actions, mean, log_std) -> Tensor:
    z = (actions - mean) / log_std.exp()
    return (z.square() * -0.5 - log_std - _HALF_LOG_2PI).sum(axis=-1)


def gaussian_act(model: Model, obs, taken_actions=None, rng: np.random.Generator | None = None):
    """Return ``(actions, log_probs, entropy)`` for an unsquashed diagonal Gaussian head.

    Sampled actions are reparameterised (``mean + std * noise``) so they carry
    gradients back to the model.
    """
    mean, log_std = model.gaussian_params(obs)
    if taken_actions is None:
        rng = rng if rng is not None else np.random.default_rng()
        noise = rng.standard_normal(mean.shape)
        actions = mean + log_std.exp() * noise
    else:
        actions = Tensor(np.asarray(taken_actions, dtype=np.float64).reshape(mean.shape))
    log_probs = _normal_log_prob(actions, mean, log_std)
    entropy = (log_std + (0.5 + _HALF_LOG_2PI)).sum(axis=-1)
    if entropy.ndim == 0:
        entropy = T.broadcast(entropy, (mean.shape[0],))
    return actions, log_probs, entropy


def squashed_gaussian_act(model: Model, obs, rng: np.random.Generator | None = None, deterministic: bool = False):
    """Tanh-squashed Gaussian sample and its corrected log-probability.

    The log-probability subtracts ``sum(log(1 - tanh(u)^2 + 1e-6))``; actions are
    mapped affinely into ``output_scale`` bounds when those are set.
    """
    mean, log_std = model.gaussian_params(obs)
    if deterministic:
        u = mean
    else:
        rng = rng if rng is not None else np.random.default_rng()
        u = mean + log_std.exp() * rng.standard_normal(mean.shape)
    squashed = u.tanh()
    log_probs = _normal_log_prob(u, mean, log_std) - (1.0 - squashed.square() + 1e-6).log().sum(axis=-1)
    return _to_bounds(model, squashed), log_probs


def _to_bounds(model: Model, squashed: Tensor) -> Tensor:
    if model.low is None:
        return squashed
    half = (model.high - model.low) / 2.0
    return squashed * half + (model.low + half)


def deterministic_act(model: Model, obs) -> Tensor:
    """Raw network output, or tanh-squashed into ``output_scale`` when bounds are set."""
    out = model.forward(obs)
    if model.low is None:
        return out
    return _to_bounds(model, out.tanh())


def tabular_act(model: Model, state_indices, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Epsilon-greedy actions from a Q-table; greedy ties resolve to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    states = np.asarray(state_indices).reshape(-1).astype(np.int64)
    n_states, n_actions = model.q_table.shape
    if np.any(states < 0) or np.any(states >= n_states):
        raise IndexError(f"state index out of range [0, {n_states})")
    greedy = np.argmax(model.q_table[states], axis=1)
    explore = rng.random(states.shape[0]) < epsilon
    random_actions = rng.integers(0, n_actions, size=states.shape[0])
    return np.where(explore, random_actions, greedy)


def polyak_update(target: Model, source: Model, tau: float) -> None:
    """``target <- tau * source + (1 - tau) * target`` for every parameter."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    src, tgt = source.state_dict(), target.state_dict()
    if set(src) != set(tgt) or any(src[k].shape != tgt[k].shape for k in src):
        raise ValueError("polyak_update: target and source architectures differ")
    if target.head_kind == "tabular":
        target.q_table[...] = tau * source.q_table + (1.0 - tau) * target.q_table
        return
    with no_grad():
        for name, p in target.params.items():
            p.data[...] = tau * source.params[name].data + (1.0 - tau) * p.data


def critic_input(states, actions) -> Tensor:
    """Concatenate observation and action batches for a Q(s, a) network."""
    return concat([states if isinstance(states, Tensor) else Tensor(states),
                   actions if isinstance(actions, Tensor) else Tensor(actions)], axis=1)
