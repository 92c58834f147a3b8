import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scoperl.autograd import backward, grad_check
from scoperl.models import (
    ModelSpec, categorical_act, deterministic_act, gaussian_act, instantiate_model, polyak_update,
    squashed_gaussian_act, tabular_act,
)


def set_output(model, values):
    """Force a zero-weight final layer whose bias is ``values``."""
    last = len(model.spec.hidden)
    model.params[f"layer{last}.weight"].data[...] = 0.0
    model.params[f"layer{last}.bias"].data[...] = values


def mlp_param_count(widths):
    return sum(a * b + b for a, b in zip(widths, widths[1:]))


@pytest.mark.parametrize("input_dim,expected", [(3, 4481), (5, 4609)])
def test_parameter_count(input_dim, expected):
    model = instantiate_model(ModelSpec(input_dim, 1, [64, 64], "tanh"), "deterministic", seed=0)
    assert model.num_parameters() == mlp_param_count([input_dim, 64, 64, 1]) == expected


def test_same_seed_same_parameters():
    spec = ModelSpec(4, 2, [8], "relu")
    a, b = instantiate_model(spec, "gaussian", 5), instantiate_model(spec, "gaussian", 5)
    for k, v in a.state_dict().items():
        np.testing.assert_array_equal(v, b.state_dict()[k])


def test_fan_in_uniform_bounds():
    model = instantiate_model(ModelSpec(16, 4, [9], "tanh"), "deterministic", 0)
    assert np.abs(model.params["layer0.weight"].data).max() <= 1 / 4
    assert np.abs(model.params["layer1.weight"].data).max() <= 1 / 3


def test_tabular_table_is_zero():
    model = instantiate_model(None, "tabular", num_states=25, num_actions=4)
    assert model.q_table.shape == (25, 4) and not model.q_table.any()


@pytest.mark.parametrize("kwargs", [
    dict(spec=ModelSpec(2, 2, [4], output_scale=(-1.0, 1.0)), head_kind="categorical"),
    dict(spec=ModelSpec(2, 2, [4], activation="sigmoid"), head_kind="deterministic"),
    dict(spec=ModelSpec(2, 2, [0]), head_kind="deterministic"),
    dict(spec=ModelSpec(2, 3, [4]), head_kind="gaussian", state_dependent_std=True),
    dict(spec=ModelSpec(2, 2, [4]), head_kind="mixture"),
])
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(ValueError):
        instantiate_model(seed=0, **kwargs)


# -- categorical -------------------------------------------------------------

def test_categorical_argmax():
    model = instantiate_model(ModelSpec(2, 3, [4]), "categorical", 0)
    set_output(model, [1.0, 3.0, 2.0])
    actions, _, _ = categorical_act(model, np.zeros((2, 2)), "argmax")
    assert actions.tolist() == [1, 1]


def test_categorical_uniform_entropy():
    model = instantiate_model(ModelSpec(2, 4, [4]), "categorical", 0)
    set_output(model, 0.0)
    _, _, entropy = categorical_act(model, np.zeros((3, 2)), "argmax")
    np.testing.assert_allclose(entropy.data, math.log(4), atol=1e-12)


def test_categorical_sample_frequencies():
    model = instantiate_model(ModelSpec(1, 3, [2]), "categorical", 0)
    logits = np.array([0.2, 1.0, -0.5])
    set_output(model, logits)
    rng = np.random.default_rng(0)
    n = 100_000
    actions, logp, _ = categorical_act(model, np.zeros((n, 1)), "sample", rng)
    probs = np.exp(logits) / np.exp(logits).sum()
    counts = np.bincount(actions, minlength=3)
    sigma = np.sqrt(n * probs * (1 - probs))
    assert np.all(np.abs(counts - n * probs) < 3 * sigma)
    np.testing.assert_allclose(logp.data, np.log(probs)[actions], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6))
def test_categorical_entropy_bounds(seed, n):
    model = instantiate_model(ModelSpec(3, n, [5]), "categorical", seed, output_gain=5.0)
    obs = np.random.default_rng(seed).normal(size=(8, 3)) * 3
    _, _, entropy = categorical_act(model, obs, "argmax")
    assert np.all(entropy.data >= -1e-12) and np.all(entropy.data <= math.log(n) + 1e-12)


# -- gaussian ----------------------------------------------------------------

def test_gaussian_standard_normal_log_prob():
    model = instantiate_model(ModelSpec(2, 2, [4]), "gaussian", 0)
    set_output(model, 0.0)
    _, logp, entropy = gaussian_act(model, np.zeros((3, 2)), taken_actions=np.zeros((3, 2)))
    np.testing.assert_allclose(logp.data, 2 * -0.5 * math.log(2 * math.pi), atol=1e-12)
    np.testing.assert_allclose(entropy.data, 2 * (0.5 + 0.5 * math.log(2 * math.pi)), atol=1e-12)


def test_gaussian_log_std_clamped_at_two():
    model = instantiate_model(ModelSpec(1, 1, [2]), "gaussian", 0, initial_log_std=5.0)
    _, log_std = model.gaussian_params(np.zeros((1, 1)))
    assert log_std.data.max() == 2.0


def test_gaussian_sample_statistics():
    model = instantiate_model(ModelSpec(1, 1, [2]), "gaussian", 0, initial_log_std=math.log(0.5))
    set_output(model, 1.5)
    actions, _, _ = gaussian_act(model, np.zeros((100_000, 1)), rng=np.random.default_rng(1))
    assert abs(actions.data.mean() - 1.5) < 3 * 0.5 / math.sqrt(1e5)
    assert abs(actions.data.std() - 0.5) < 0.01


def test_gaussian_log_prob_gradient_matches_finite_differences():
    model = instantiate_model(ModelSpec(3, 2, [5], "tanh"), "gaussian", 2, initial_log_std=-0.3)
    rng = np.random.default_rng(0)
    obs, taken = rng.normal(size=(4, 3)), rng.normal(size=(4, 2))
    err = grad_check(lambda: gaussian_act(model, obs, taken_actions=taken)[1].sum(), model.parameters(), 1e-5)
    assert err < 1e-4


@pytest.mark.parametrize("mean,log_std", [(0.0, 0.0), (0.7, -0.5), (-1.2, 0.4)])
def test_gaussian_density_integrates_to_one(mean, log_std):
    model = instantiate_model(ModelSpec(1, 1, [2]), "gaussian", 0, initial_log_std=log_std)
    set_output(model, mean)
    grid = np.linspace(mean - 12 * math.exp(log_std), mean + 12 * math.exp(log_std), 20_001)
    _, logp, _ = gaussian_act(model, np.zeros((grid.size, 1)), taken_actions=grid.reshape(-1, 1))
    assert abs(np.trapezoid(np.exp(logp.data), grid) - 1.0) < 1e-3


def test_gaussian_reparameterised_sample_carries_gradient():
    model = instantiate_model(ModelSpec(2, 1, [3]), "gaussian", 0)
    actions, _, _ = gaussian_act(model, np.ones((4, 2)), rng=np.random.default_rng(0))
    backward(actions.sum())
    assert model.params["log_std"].grad is not None


def test_squashed_gaussian_bounds_and_correction():
    spec = ModelSpec(2, 2, [4], output_scale=(-2.0, 2.0))
    model = instantiate_model(spec, "gaussian", 0, state_dependent_std=True, squash=True)
    set_output(model, [0.3, math.log(0.4)])
    rng = np.random.default_rng(3)
    actions, logp = squashed_gaussian_act(model, np.zeros((5, 2)), rng)
    assert np.all(np.abs(actions.data) <= 2.0)
    u = np.arctanh(actions.data[:, 0] / 2.0)
    base = -0.5 * ((u - 0.3) / 0.4) ** 2 - math.log(0.4) - 0.5 * math.log(2 * math.pi)
    expected = base - np.log(1 - np.tanh(u) ** 2 + 1e-6)
    np.testing.assert_allclose(logp.data, expected, atol=1e-6)


# -- deterministic -----------------------------------------------------------

def test_deterministic_bounds_examples():
    model = instantiate_model(ModelSpec(1, 1, [2], output_scale=(-2.0, 2.0)), "deterministic", 0)
    set_output(model, 0.0)
    assert deterministic_act(model, np.zeros((1, 1))).data[0, 0] == 0.0
    set_output(model, 1.0)
    assert deterministic_act(model, np.zeros((1, 1))).data[0, 0] == pytest.approx(2 * math.tanh(1.0), abs=1e-12)
    set_output(model, 1e6)
    assert deterministic_act(model, np.zeros((1, 1))).data[0, 0] <= 2.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 100.0))
def test_deterministic_outputs_within_bounds(seed, scale):
    model = instantiate_model(ModelSpec(3, 2, [6], output_scale=([-1.0, 0.0], [1.0, 5.0])), "deterministic", seed,
                              output_gain=scale)
    out = deterministic_act(model, np.random.default_rng(seed).normal(size=(16, 3)) * scale).data
    assert np.all(out[:, 0] >= -1) and np.all(out[:, 0] <= 1)
    assert np.all(out[:, 1] >= 0) and np.all(out[:, 1] <= 5)


def test_unbounded_deterministic_is_raw_output():
    model = instantiate_model(ModelSpec(2, 3, [4]), "deterministic", 0)
    obs = np.ones((2, 2))
    np.testing.assert_array_equal(deterministic_act(model, obs).data, model.forward(obs).data)


# -- tabular -----------------------------------------------------------------

def test_tabular_tie_breaking():
    model = instantiate_model(None, "tabular", num_states=2, num_actions=4)
    model.q_table[0] = [0, 2, 1, 2]
    rng = np.random.default_rng(0)
    assert tabular_act(model, [0], 0.0, rng).tolist() == [1]
    assert tabular_act(model, [1], 0.0, rng).tolist() == [0]


def test_tabular_full_exploration_is_uniform():
    model = instantiate_model(None, "tabular", num_states=1, num_actions=4)
    n = 100_000
    counts = np.bincount(tabular_act(model, np.zeros(n), 1.0, np.random.default_rng(2)), minlength=4)
    assert np.all(np.abs(counts - n / 4) < 3 * math.sqrt(n * 0.25 * 0.75))


def test_tabular_errors():
    model = instantiate_model(None, "tabular", num_states=3, num_actions=2)
    with pytest.raises(IndexError):
        tabular_act(model, [3], 0.0, np.random.default_rng())
    with pytest.raises(ValueError):
        tabular_act(model, [0], 1.5, np.random.default_rng())


# -- polyak ------------------------------------------------------------------

def _pair(seed=0):
    spec = ModelSpec(2, 1, [3])
    return instantiate_model(spec, "deterministic", seed), instantiate_model(spec, "deterministic", seed + 1)


def test_polyak_examples():
    target, source = _pair()
    polyak_update(target, source, 1.0)
    for k, v in target.state_dict().items():
        np.testing.assert_array_equal(v, source.state_dict()[k])
    target, source = _pair()
    before = target.state_dict()
    polyak_update(target, source, 0.0)
    for k, v in target.state_dict().items():
        np.testing.assert_array_equal(v, before[k])
    for p in target.parameters():
        p.data[...] = 0.0
    for p in source.parameters():
        p.data[...] = 1.0
    polyak_update(target, source, 0.5)
    assert all(np.all(p.data == 0.5) for p in target.parameters())


def test_polyak_architecture_mismatch():
    a = instantiate_model(ModelSpec(2, 1, [3]), "deterministic", 0)
    b = instantiate_model(ModelSpec(2, 1, [4]), "deterministic", 0)
    with pytest.raises(ValueError):
        polyak_update(a, b, 0.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 1000))
def test_polyak_composition(a, b, seed):
    t1, source = _pair(seed)
    t2 = t1.clone()
    polyak_update(t1, source, a)
    polyak_update(t1, source, b)
    polyak_update(t2, source, a + b - a * b)
    for k, v in t1.state_dict().items():
        np.testing.assert_allclose(v, t2.state_dict()[k], rtol=1e-12, atol=1e-12)


def test_state_dict_round_trip_and_clone_independence():
    model = instantiate_model(ModelSpec(2, 2, [3]), "gaussian", 0)
    twin = model.clone()
    twin.params["log_std"].data[...] = 1.0
    assert not np.any(model.params["log_std"].data == 1.0)
    model.load_state_dict(twin.state_dict())
    np.testing.assert_array_equal(model.params["log_std"].data, 1.0)
    with pytest.raises(ValueError):
        model.load_state_dict({"nope": np.zeros(1)})
