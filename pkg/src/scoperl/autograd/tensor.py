"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation is an :class:`Op` registered in ``OPS``.  An op
turns input arrays into an output array plus a context, and maps the output
gradient back to one gradient per input.  Tensors produced while any input
requires gradients remember the op, its context and their parents, which is
enough for :func:`backward` to walk the graph in reverse topological order.

Broadcasting is intentionally narrow: binary ops accept equal shapes, a scalar
operand, or an operand whose shape is a trailing suffix of the other (a
leading batch dimension).  Anything else must go through :func:`broadcast`.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64

_grad_enabled = True


class ShapeError(ValueError):
    """Operand shapes are incompatible for an operation."""


class DomainError(ValueError):
    """An input lies outside the domain of an operation (e.g. log of a negative)."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_op", "_ctx", "_parents", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=DTYPE) if not isinstance(data, np.ndarray) or data.dtype != DTYPE else data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._op: Op | None = None
        self._ctx = None
        self._parents: tuple[Tensor, ...] = ()

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._op is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> dict[Tensor, np.ndarray]:
        return backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def square(self):
        return square(self)

    def sqrt(self):
        return sqrt(self)

    def clamp(self, lo=None, hi=None):
        return clamp(self, lo, hi)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# ----------------------------------------------------------------------------
# Op machinery
# ----------------------------------------------------------------------------


class Op:
    """A differentiable primitive; subclasses implement ``forward`` and ``backward``."""

    name = "op"

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError

    def backward(self, ctx, grad):
        raise NotImplementedError


OPS: dict[str, Op] = {}


def register(cls):
    OPS[cls.name] = cls()
    return cls


def _apply(name: str, inputs: Sequence[Tensor], **kwargs) -> Tensor:
    op = OPS[name]
    out_data, ctx = op.forward(*[t.data for t in inputs], **kwargs)
    out = Tensor(out_data)
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._op = op
        out._ctx = ctx
        out._parents = tuple(inputs)
    return out


def forward_op(op_id: str, *inputs, **kwargs) -> Tensor:
    """Apply the registered op ``op_id`` to ``inputs``."""
    if op_id not in OPS:
        raise KeyError(f"unknown op {op_id!r}")
    return _apply(op_id, [as_tensor(t) for t in inputs], **kwargs)


def _check_binary(name: str, a: np.ndarray, b: np.ndarray) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb or not sa or not sb:
        return
    if len(sa) > len(sb) and sa[len(sa) - len(sb):] == sb:
        return
    if len(sb) > len(sa) and sb[len(sb) - len(sa):] == sa:
        return
    raise ShapeError(f"{name}: incompatible shapes {sa} and {sb}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if not shape:
        return np.asarray(grad.sum())
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead)))


class _Binary(Op):
    def forward(self, a, b):
        _check_binary(self.name, a, b)
        return self.compute(a, b), (a, b)


@register
class Add(_Binary):
    name = "add"

    def compute(self, a, b):
        return a + b

    def backward(self, ctx, g):
        a, b = ctx
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


@register
class Sub(_Binary):
    name = "sub"

    def compute(self, a, b):
        return a - b

    def backward(self, ctx, g):
        a, b = ctx
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


@register
class Mul(_Binary):
    name = "mul"

    def compute(self, a, b):
        return a * b

    def backward(self, ctx, g):
        a, b = ctx
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


@register
class Div(_Binary):
    name = "div"

    def compute(self, a, b):
        return a / b

    def backward(self, ctx, g):
        a, b = ctx
        return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)


@register
class Minimum(_Binary):
    name = "minimum"

    def compute(self, a, b):
        return np.minimum(a, b)

    def backward(self, ctx, g):
        a, b = ctx
        pick_a = a <= b
        return _unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)


@register
class MatMul(Op):
    name = "matmul"

    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
        return a @ b, (a, b)

    def backward(self, ctx, g):
        a, b = ctx
        return g @ b.T, a.T @ g


@register
class Neg(Op):
    name = "neg"

    def forward(self, x):
        return -x, None

    def backward(self, ctx, g):
        return (-g,)


@register
class Tanh(Op):
    name = "tanh"

    def forward(self, x):
        out = np.tanh(x)
        return out, out

    def backward(self, out, g):
        return (g * (1.0 - out * out),)


@register
class Relu(Op):
    name = "relu"

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, mask, g):
        return (g * mask,)


@register
class Exp(Op):
    name = "exp"

    def forward(self, x):
        out = np.exp(x)
        return out, out

    def backward(self, out, g):
        return (g * out,)


@register
class Log(Op):
    name = "log"

    def forward(self, x):
        if np.any(x < 0):
            raise DomainError(f"log: negative input (min {x.min()})")
        with np.errstate(divide="ignore"):
            return np.log(x), x

    def backward(self, x, g):
        return (g / x,)


@register
class Square(Op):
    name = "square"

    def forward(self, x):
        return x * x, x

    def backward(self, x, g):
        return (2.0 * g * x,)


@register
class Sqrt(Op):
    name = "sqrt"

    def forward(self, x):
        if np.any(x < 0):
            raise DomainError(f"sqrt: negative input (min {x.min()})")
        out = np.sqrt(x)
        return out, out

    def backward(self, out, g):
        return (g * 0.5 / out,)


@register
class Clamp(Op):
    name = "clamp"

    def forward(self, x, lo=None, hi=None):
        out = np.clip(x, lo, hi)
        inside = np.ones(x.shape, dtype=bool)
        if lo is not None:
            inside &= x > lo
        if hi is not None:
            inside &= x < hi
        return out, inside

    def backward(self, inside, g):
        return (g * inside,)


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


@register
class Sum(Op):
    name = "sum"

    def forward(self, x, axis=None, keepdims=False):
        return np.asarray(x.sum(axis=axis, keepdims=keepdims)), (x.shape, axis, keepdims)

    def backward(self, ctx, g):
        shape, axis, keepdims = ctx
        return (_expand_reduced(g, shape, axis, keepdims).copy(),)


@register
class Mean(Op):
    name = "mean"

    def forward(self, x, axis=None, keepdims=False):
        count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
        return np.asarray(x.mean(axis=axis, keepdims=keepdims)), (x.shape, axis, keepdims, count)

    def backward(self, ctx, g):
        shape, axis, keepdims, count = ctx
        return (_expand_reduced(g, shape, axis, keepdims) / count,)


def _softmax(x, axis):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


@register
class Softmax(Op):
    name = "softmax"

    def forward(self, x, axis=-1):
        out = _softmax(x, axis)
        return out, (out, axis)

    def backward(self, ctx, g):
        s, axis = ctx
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)


@register
class LogSoftmax(Op):
    name = "log_softmax"

    def forward(self, x, axis=-1):
        shifted = x - x.max(axis=axis, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        return out, (out, axis)

    def backward(self, ctx, g):
        out, axis = ctx
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)


@register
class GatherRows(Op):
    """Pick ``x[i, idx[i]]`` for every row ``i``."""

    name = "gather_rows"

    def forward(self, x, idx):
        idx = np.asarray(idx).astype(np.int64).reshape(-1)
        if x.ndim != 2 or idx.shape[0] != x.shape[0]:
            raise ShapeError(f"gather_rows: expected (B, n) input and B indices, got {x.shape} and {idx.shape}")
        if np.any(idx < 0) or np.any(idx >= x.shape[1]):
            raise IndexError(f"gather_rows: index out of range for {x.shape[1]} columns")
        rows = np.arange(x.shape[0])
        return x[rows, idx], (x.shape, rows, idx)

    def backward(self, ctx, g):
        shape, rows, idx = ctx
        out = np.zeros(shape)
        out[rows, idx] = g
        return out, None


@register
class Concat(Op):
    name = "concat"

    def forward(self, *xs, axis=-1):
        try:
            out = np.concatenate(xs, axis=axis)
        except ValueError as exc:
            raise ShapeError(f"concat: incompatible shapes {[x.shape for x in xs]}") from exc
        sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]
        return out, (sizes, axis)

    def backward(self, ctx, g):
        sizes, axis = ctx
        return tuple(np.split(g, sizes, axis=axis))


@register
class Broadcast(Op):
    name = "broadcast"

    def forward(self, x, shape=()):
        try:
            out = np.broadcast_to(x, shape)
        except ValueError as exc:
            raise ShapeError(f"broadcast: cannot broadcast {x.shape} to {tuple(shape)}") from exc
        return out, x.shape

    def backward(self, src_shape, g):
        lead = g.ndim - len(src_shape)
        g = g.sum(axis=tuple(range(lead))) if lead else g
        axes = tuple(i for i, n in enumerate(src_shape) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return (g,)


@register
class Reshape(Op):
    name = "reshape"

    def forward(self, x, shape=()):
        return x.reshape(shape), x.shape

    def backward(self, src_shape, g):
        return (g.reshape(src_shape),)


@register
class Index(Op):
    name = "index"

    def forward(self, x, key=None):
        return x[key], (x.shape, key)

    def backward(self, ctx, g):
        shape, key = ctx
        out = np.zeros(shape)
        np.add.at(out, key, g)
        return (out,)


# ----------------------------------------------------------------------------
# functional surface
# ----------------------------------------------------------------------------


def add(a, b):
    return _apply("add", (as_tensor(a), as_tensor(b)))


def sub(a, b):
    return _apply("sub", (as_tensor(a), as_tensor(b)))


def mul(a, b):
    return _apply("mul", (as_tensor(a), as_tensor(b)))


def div(a, b):
    return _apply("div", (as_tensor(a), as_tensor(b)))


def minimum(a, b):
    return _apply("minimum", (as_tensor(a), as_tensor(b)))


def matmul(a, b):
    return _apply("matmul", (as_tensor(a), as_tensor(b)))


def neg(x):
    return _apply("neg", (as_tensor(x),))


def tanh(x):
    return _apply("tanh", (as_tensor(x),))


def relu(x):
    return _apply("relu", (as_tensor(x),))


def exp(x):
    return _apply("exp", (as_tensor(x),))


def log(x):
    return _apply("log", (as_tensor(x),))


def square(x):
    return _apply("square", (as_tensor(x),))


def sqrt(x):
    return _apply("sqrt", (as_tensor(x),))


def clamp(x, lo=None, hi=None):
    return _apply("clamp", (as_tensor(x),), lo=lo, hi=hi)


def sum_(x, axis=None, keepdims=False):
    return _apply("sum", (as_tensor(x),), axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False):
    return _apply("mean", (as_tensor(x),), axis=axis, keepdims=keepdims)


def softmax(x, axis=-1):
    return _apply("softmax", (as_tensor(x),), axis=axis)


def log_softmax(x, axis=-1):
    return _apply("log_softmax", (as_tensor(x),), axis=axis)


def gather_rows(x, idx):
    # indices are not differentiable; they travel as a constant parent
    return _apply("gather_rows", (as_tensor(x), Tensor(np.asarray(idx, dtype=DTYPE))))


def concat(tensors: Iterable, axis=-1):
    return _apply("concat", tuple(as_tensor(t) for t in tensors), axis=axis)


def broadcast(x, shape):
    return _apply("broadcast", (as_tensor(x),), shape=tuple(shape))


def reshape(x, shape):
    return _apply("reshape", (as_tensor(x),), shape=tuple(shape))


def index(x, key):
    return _apply("index", (as_tensor(x),), key=key)


# ----------------------------------------------------------------------------
# reverse pass
# ----------------------------------------------------------------------------


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> dict[Tensor, np.ndarray]:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    Returns the gradients contributed by this call, keyed by leaf tensor.
    """
    if root.shape != ():
        raise ShapeError(f"backward: root must be a scalar, got shape {root.shape}")
    if not root.requires_grad:
        return {}
    grads: dict[int, np.ndarray] = {id(root): np.ones(())}
    contributed: dict[Tensor, np.ndarray] = {}
    for node in reversed(_topological(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._op is None:
            g = np.array(g, dtype=DTYPE)
            node.grad = g.copy() if node.grad is None else node.grad + g
            contributed[node] = g
            continue
        parent_grads = node._op.backward(node._ctx, g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    return contributed


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def grad_check(function: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Largest relative disagreement between analytic and central-difference gradients.

    ``function`` is called with no arguments and must read the current values
    of ``params``; it is re-evaluated once per perturbed coordinate.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    zero_grads(params)
    backward(function())
    worst = 0.0
    for p in params:
        analytic = np.zeros(p.shape) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            with no_grad():
                up = function().item()
            flat[i] = original - eps
            with no_grad():
                down = function().item()
            flat[i] = original
            numeric = (up - down) / (2 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    zero_grads(params)
    return worst
