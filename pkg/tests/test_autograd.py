import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scoperl.autograd import (
    OPS, Adam, DomainError, OptimState, ShapeError, Tensor, adam_step, backward, broadcast, clip_grad_norm, concat,
    forward_op, gather_rows, grad_check, log_softmax, minimum, no_grad, softmax, zero_grads,
)
from scoperl.autograd.serialization import CheckpointFormatError, dumps, load_tensors, loads, save_tensors


def param(rng, *shape, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


# -- forward examples --------------------------------------------------------

def test_matmul_shape():
    out = forward_op("matmul", Tensor(np.ones((2, 3))), Tensor(np.ones((3, 4))))
    assert out.shape == (2, 4)


def test_matmul_inner_mismatch_names_op_and_shapes():
    with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(4, 4\)"):
        forward_op("matmul", Tensor(np.ones((2, 3))), Tensor(np.ones((4, 4))))


def test_clamp_boundary():
    out = Tensor(np.array([-3.0, 0.5, 9.0])).clamp(-1.0, 1.0)
    np.testing.assert_array_equal(out.data, [-1.0, 0.5, 1.0])


def test_softmax_uniform():
    np.testing.assert_allclose(softmax(Tensor(np.zeros(3))).data, np.full(3, 1 / 3))


@pytest.mark.parametrize("op", ["log", "sqrt"])
def test_domain_errors(op):
    with pytest.raises(DomainError):
        forward_op(op, Tensor(np.array([1.0, -0.5])))


def test_mismatched_binary_shapes_rejected():
    with pytest.raises(ShapeError, match="add"):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((3, 2)))


def test_leading_batch_and_scalar_broadcast_allowed():
    x = Tensor(np.ones((4, 3)))
    assert (x + Tensor(np.arange(3.0))).shape == (4, 3)
    assert (x * 2.0).shape == (4, 3)


def test_middle_axis_broadcast_needs_explicit_op():
    with pytest.raises(ShapeError):
        Tensor(np.ones((4, 3))) + Tensor(np.ones((4, 1)))
    assert broadcast(Tensor(np.ones((4, 1))), shape=(4, 3)).shape == (4, 3)


# -- backward examples -------------------------------------------------------

def test_square_derivative():
    x = Tensor(np.array(3.0), requires_grad=True)
    grads = backward(x * x)
    assert grads[x] == pytest.approx(6.0)


def test_sum_of_softmax_has_zero_gradient():
    x = Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
    backward(softmax(x).sum())
    np.testing.assert_allclose(x.grad, 0.0, atol=1e-15)


def test_non_scalar_root_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        backward(x * 2.0)


def test_gradients_accumulate_across_backward_calls():
    x = Tensor(np.array(2.0), requires_grad=True)
    backward(x * 3.0)
    backward(x * 3.0)
    assert x.grad == pytest.approx(6.0)
    zero_grads([x])
    assert x.grad is None or x.grad == 0.0


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_shared_tensor_sums_branch_gradients(seed):
    rng = np.random.default_rng(seed)
    x = param(rng, 3)
    a, b = rng.normal(size=3), rng.normal(size=3)
    backward((x * Tensor(a)).sum() + (x * Tensor(b)).tanh().sum())
    both = x.grad.copy()
    zero_grads([x])
    backward((x * Tensor(a)).sum())
    first = x.grad.copy()
    zero_grads([x])
    backward((x * Tensor(b)).tanh().sum())
    np.testing.assert_allclose(both, first + x.grad, rtol=1e-12, atol=1e-14)


# -- grad_check over the catalog --------------------------------------------

def _op_cases(rng):
    """One scalar-valued probe per catalogued op."""
    w = rng.normal(size=(3, 4))
    a, b = param(rng, 3, 4), param(rng, 3, 4)
    pos = param(rng, 3, 4, low=0.5, high=2.0)
    m = param(rng, 4, 2)
    idx = rng.integers(0, 4, size=3)
    c = param(rng, 3, 2)
    row = param(rng, 4)
    weights = Tensor(w)
    w32, w36 = Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(3, 6)))
    return {
        "add": (lambda: ((a + b) * weights).sum(), [a, b]),
        "sub": (lambda: ((a - b) * weights).sum(), [a, b]),
        "mul": (lambda: (a * b).sum(), [a, b]),
        "div": (lambda: (a / pos).sum(), [a, pos]),
        "minimum": (lambda: (minimum(a, b) * weights).sum(), [a, b]),
        "matmul": (lambda: ((a @ m) * w32).sum(), [a, m]),
        "neg": (lambda: (-a * weights).sum(), [a]),
        "tanh": (lambda: (a.tanh() * weights).sum(), [a]),
        "relu": (lambda: (a.relu() * weights).sum(), [a]),
        "exp": (lambda: (a.exp() * weights).sum(), [a]),
        "log": (lambda: (pos.log() * weights).sum(), [pos]),
        "square": (lambda: (a.square() * weights).sum(), [a]),
        "sqrt": (lambda: (pos.sqrt() * weights).sum(), [pos]),
        "clamp": (lambda: (a.clamp(-0.5, 0.5) * weights).sum(), [a]),
        "sum": (lambda: (a.sum(axis=1) * Tensor(w[:, 0])).sum(), [a]),
        "mean": (lambda: (a.mean(axis=0) * Tensor(w[0])).sum(), [a]),
        "softmax": (lambda: (softmax(a) * weights).sum(), [a]),
        "log_softmax": (lambda: (log_softmax(a) * weights).sum(), [a]),
        "gather_rows": (lambda: (gather_rows(a, idx) * Tensor(w[:, 0])).sum(), [a]),
        "concat": (lambda: (concat([a, c], axis=-1) * w36).sum(), [a, c]),
        "broadcast": (lambda: (broadcast(row, shape=(3, 4)) * weights).sum(), [row]),
        "reshape": (lambda: (a.reshape(4, 3) * Tensor(w.reshape(4, 3))).sum(), [a]),
        "index": (lambda: (a[1:, :2] * Tensor(w[1:, :2])).sum(), [a]),
    }


def test_probe_table_covers_every_registered_op():
    assert set(_op_cases(np.random.default_rng(0))) == set(OPS)


@pytest.mark.parametrize("op", sorted(OPS))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_grad_check_every_op(op, seed):
    rng = np.random.default_rng(seed)
    fn, params = _op_cases(rng)[op]
    assert grad_check(fn, params, eps=1e-5) < 1e-4


def test_grad_check_linear_is_exact():
    rng = np.random.default_rng(3)
    x = param(rng, 5)
    c = Tensor(rng.normal(size=5))
    assert grad_check(lambda: (x * c).sum(), [x]) < 1e-10


def test_grad_check_two_layer_tanh_network():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(6, 3)))
    w1, b1, w2 = param(rng, 3, 8), param(rng, 8), param(rng, 8, 1)
    loss = lambda: ((x @ w1 + b1).tanh() @ w2).square().mean()
    assert grad_check(loss, [w1, b1, w2], eps=1e-5) < 1e-4


def test_corrupted_derivative_rule_is_detected(monkeypatch):
    rng = np.random.default_rng(5)
    x = param(rng, 4)
    tanh_op = OPS["tanh"]
    original = tanh_op.backward
    monkeypatch.setattr(tanh_op, "backward", lambda ctx, g: tuple(1.5 * r for r in original(ctx, g)))
    assert grad_check(lambda: x.tanh().sum(), [x]) > 1e-2


def test_grad_check_rejects_bad_eps():
    x = Tensor(np.ones(1), requires_grad=True)
    with pytest.raises(ValueError):
        grad_check(lambda: x.sum(), [x], eps=0.0)


# -- Adam and clipping -------------------------------------------------------

def test_adam_first_step_moves_by_learning_rate():
    p = [np.array([1.0])]
    state = OptimState.zeros_like(p, learning_rate=0.01)
    adam_step(p, [np.array([0.37])], state)
    assert state.step_count == 1
    # m_hat = g, v_hat = g^2 so the step is lr * g / (|g| + eps_hat)
    expected = 1.0 - 0.01 * 0.37 / (0.37 + 1e-8)
    assert p[0][0] == pytest.approx(expected, rel=1e-12)
    assert abs(1.0 - p[0][0]) == pytest.approx(0.01, rel=0.01)


def test_adam_constant_gradient_moves_monotonically():
    p = [np.array([0.0])]
    state = OptimState.zeros_like(p, 0.1)
    trail = []
    for _ in range(3):
        adam_step(p, [np.array([-2.0])], state)
        trail.append(p[0][0])
    assert trail[0] > 0 and trail[1] > trail[0] and trail[2] > trail[1]
    assert state.step_count == 3


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 1000))
def test_adam_zero_gradient_is_identity(seed, step_count):
    rng = np.random.default_rng(seed)
    p = [rng.normal(size=(2, 3)), rng.normal(size=4)]
    before = [a.copy() for a in p]
    state = OptimState.zeros_like(p, 1e-3)
    state.step_count = step_count
    adam_step(p, [np.zeros((2, 3)), np.zeros(4)], state)
    for a, b in zip(p, before):
        np.testing.assert_array_equal(a, b)
    assert state.step_count == step_count + 1


def test_adam_shape_mismatch():
    p = [np.zeros(3)]
    with pytest.raises(ShapeError):
        adam_step(p, [np.zeros(4)], OptimState.zeros_like(p, 1e-3))


def test_adam_rejects_bad_betas():
    p = [np.zeros(1)]
    with pytest.raises(ValueError):
        adam_step(p, [np.zeros(1)], OptimState.zeros_like(p, 1e-3), beta1=1.0)


def test_clip_examples():
    grads = [np.array([6.0, 8.0])]
    clipped, norm = clip_grad_norm(grads, 5.0)
    assert norm == pytest.approx(10.0)
    np.testing.assert_allclose(clipped[0], [3.0, 4.0])
    same, norm = clip_grad_norm([np.array([0.0, 3.0])], 5.0)
    np.testing.assert_array_equal(same[0], [0.0, 3.0])
    assert norm == pytest.approx(3.0)
    zero, norm = clip_grad_norm([np.zeros(3)], 1.0)
    assert norm == 0.0 and not zero[0].any()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=12), st.floats(1e-3, 1e3))
def test_clip_output_norm_bounded(values, max_norm):
    clipped, _ = clip_grad_norm([np.asarray(values)], max_norm)
    assert np.linalg.norm(clipped[0]) <= max_norm + 1e-9


def test_adam_optimizer_minimises_quadratic():
    x = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam([x], lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        backward((x - Tensor(np.array([1.0, 1.0]))).square().sum())
        opt.step()
    np.testing.assert_allclose(x.data, [1.0, 1.0], atol=1e-3)


# -- checkpoint format -------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    tensors = {"w": rng.normal(size=(3, 2)), "b": rng.normal(size=2), "s": np.asarray(1.5)}
    path = tmp_path / "params.sktn"
    save_tensors(path, tensors)
    back = load_tensors(path)
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == tensors[k].shape
        np.testing.assert_array_equal(back[k], tensors[k])


def test_checkpoint_header_layout():
    blob = dumps({"ab": np.array([1.0, 2.0])})
    assert blob[:4] == b"SKTN"
    assert int.from_bytes(blob[4:8], "little") == 1
    assert int.from_bytes(blob[8:12], "little") == 1
    assert blob[-16:] == np.array([1.0, 2.0], dtype="<f8").tobytes()


def test_checkpoint_rejects_garbage():
    with pytest.raises(CheckpointFormatError):
        loads(b"NOPE" + bytes(12))
    with pytest.raises(CheckpointFormatError):
        loads(dumps({"x": np.ones(4)})[:-3])
