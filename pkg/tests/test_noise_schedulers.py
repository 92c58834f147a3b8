import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scoperl.noise import GaussianNoise, OrnsteinUhlenbeckNoise, OUState, gaussian_sample, make_noise, ou_step
from scoperl.schedulers import (
    KLAdaptiveLR, LinearLR, SchedulerState, kl_adaptive_update, linear_update, make_scheduler,
)


# -- noise -------------------------------------------------------------------

def test_gaussian_zero_std_is_mean():
    assert np.all(gaussian_sample((3, 2), 0.7, 0.0, np.random.default_rng(0)) == 0.7)


def test_gaussian_sample_mean():
    x = gaussian_sample(100_000, 0.0, 1.0, np.random.default_rng(1))
    assert abs(x.mean()) < 3 / math.sqrt(1e5)


def test_gaussian_reproducible_and_validated():
    a = gaussian_sample(5, 0, 1, np.random.default_rng(9))
    b = gaussian_sample(5, 0, 1, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        gaussian_sample(5, 0, -1, np.random.default_rng())


def test_ou_single_step_example():
    value, state = ou_step(OUState(np.array([1.0]), theta=0.15, sigma=0.0, mu=0.0, dt=1.0), np.random.default_rng())
    assert value[0] == pytest.approx(0.85)


def test_ou_frozen_process():
    state = OUState(np.array([0.3, -2.0]), theta=0.0, sigma=0.0)
    rng = np.random.default_rng(0)
    for _ in range(100):
        value, state = ou_step(state, rng)
    np.testing.assert_array_equal(value, [0.3, -2.0])


def test_ou_stationary_variance():
    theta, sigma, dt = 0.15, 0.2, 0.1
    rng = np.random.default_rng(4)
    state = OUState(np.zeros(100), theta, sigma, 0.0, dt)
    for _ in range(2000):
        ou_step(state, rng)
    samples = np.empty((10_000, 100))
    for i in range(10_000):
        samples[i], state = ou_step(state, rng)
    expected = sigma**2 * dt / (2 * theta * dt - theta**2 * dt**2)
    assert abs(samples.var() / expected - 1.0) < 0.10


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.floats(0.01, 0.99), st.floats(-2, 2))
def test_ou_noiseless_converges_monotonically(x0, theta_dt, mu):
    state = OUState(np.array([x0]), theta=theta_dt, sigma=0.0, mu=mu, dt=1.0)
    gaps = [abs(x0 - mu)]
    for _ in range(30):
        value, state = ou_step(state, np.random.default_rng())
        gaps.append(abs(value[0] - mu))
    assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))


def test_ou_validation():
    with pytest.raises(ValueError):
        OUState(np.zeros(1), dt=0.0)


def test_noise_objects_reproducible():
    for cfg in ({"type": "gaussian", "std": 0.3}, {"type": "ou", "sigma": 0.5}):
        a, b = make_noise(cfg, seed=3), make_noise(cfg, seed=3)
        np.testing.assert_array_equal(a.sample((4, 2)), b.sample((4, 2)))
    assert make_noise(None) is None
    with pytest.raises(ValueError):
        make_noise({"type": "pink"})


def test_ou_row_reset():
    noise = OrnsteinUhlenbeckNoise(sigma=1.0, seed=0)
    noise.sample((3, 1))
    noise.reset(np.array([True, False, True]))
    assert noise.state.value[0, 0] == 0.0 and noise.state.value[2, 0] == 0.0 and noise.state.value[1, 0] != 0.0
    assert isinstance(make_noise({"type": "gaussian"}), GaussianNoise)


# -- schedulers --------------------------------------------------------------

def test_kl_dead_zone_keeps_rate():
    state = SchedulerState(1e-3, kl_threshold=0.008)
    assert kl_adaptive_update(state, 0.008) == 1e-3


def test_kl_shrink_example():
    state = SchedulerState(1e-3, kl_threshold=0.008)
    assert kl_adaptive_update(state, 0.02) == pytest.approx(1e-3 / 1.5)
    assert kl_adaptive_update(SchedulerState(1e-3), 0.001) == pytest.approx(1.5e-3)


def test_kl_clamps_at_min():
    state = SchedulerState(1e-3, min_lr=1e-6)
    for _ in range(100):
        kl_adaptive_update(state, 1.0)
    assert state.current_lr == 1e-6


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.floats(1e-5, 1e-2))
def test_kl_rate_stays_in_bounds(kls, lr):
    state = SchedulerState(lr, min_lr=1e-5, max_lr=1e-2)
    for kl in kls:
        out = kl_adaptive_update(state, kl)
        assert 1e-5 <= out <= 1e-2


@settings(max_examples=100, deadline=None)
@given(st.floats(0.004, 0.016))
def test_kl_idempotent_inside_band(kl):
    state = SchedulerState(3e-4, kl_threshold=0.008)
    first = kl_adaptive_update(state, kl)
    assert kl_adaptive_update(state, kl) == first == 3e-4


def test_kl_rejects_negative():
    with pytest.raises(ValueError):
        kl_adaptive_update(SchedulerState(1e-3), -0.1)


def test_linear_examples():
    state = SchedulerState(1e-3, min_lr=1e-5, max_lr=1e-3)
    assert linear_update(state, 0, 100) == pytest.approx(1e-3)
    assert linear_update(state, 100, 100) == pytest.approx(1e-5)
    assert linear_update(state, 50, 100) == pytest.approx((1e-3 + 1e-5) / 2)
    with pytest.raises(ValueError):
        linear_update(state, 101, 100)


def test_scheduler_factory():
    assert make_scheduler(None, 1e-3) is None
    assert isinstance(make_scheduler({"type": "kl_adaptive", "kl_threshold": 0.01}, 1e-3), KLAdaptiveLR)
    sched = make_scheduler({"type": "linear", "min_lr": 1e-5, "total_steps": 10}, 1e-3)
    assert isinstance(sched, LinearLR) and sched.step(step=10) == pytest.approx(1e-5)
    assert make_scheduler({"type": "constant"}, 2e-4).step(kl=5.0) == 2e-4
    with pytest.raises(ValueError):
        make_scheduler({"type": "cosine"}, 1e-3)
