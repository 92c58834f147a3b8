"""Built-in vectorized kernels: CartPole, Pendulum, GridWorld and Echo."""

from __future__ import annotations

import math

import numpy as np

from .base import Box, Discrete, VecEnv


class CartPole(VecEnv):
    """Cart-pole balancing with explicit-Euler integration.

    Constants follow the classic control formulation: g=9.8, cart mass 1.0,
    pole mass 0.1, half pole length 0.5, force 10 N, dt 0.02.  Episodes end
    when |x| > 2.4, |theta| > 12 degrees, or at the step limit (500).
    """

    name = "cartpole"
    default_max_episode_steps = 500

    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    length = 0.5
    force_mag = 10.0
    tau = 0.02
    x_threshold = 2.4
    theta_threshold = 12 * 2 * math.pi / 360
    init_bound = 0.05

    def __init__(self, num_envs=1, seed=0, max_episode_steps=None, **kw):
        super().__init__(num_envs, seed, max_episode_steps, **kw)
        self.total_mass = self.masspole + self.masscart
        self.polemass_length = self.masspole * self.length
        high = np.array([self.x_threshold * 2, np.finfo(np.float32).max, self.theta_threshold * 2,
                         np.finfo(np.float32).max])
        self.observation_space = Box(-high, high)
        self.action_space = Discrete(2)
        self.state = np.zeros((self.num_envs, 4))

    def _reset_rows(self, mask):
        self.state[mask] = self.rng.uniform(-self.init_bound, self.init_bound, size=(int(mask.sum()), 4))

    def _observe(self):
        return self.state.copy()

    def _advance(self, actions):
        x, x_dot, theta, theta_dot = self.state.T
        force = np.where(actions[:, 0] == 1, self.force_mag, -self.force_mag)
        costheta = np.cos(theta)
        sintheta = np.sin(theta)
        temp = (force + self.polemass_length * theta_dot**2 * sintheta) / self.total_mass
        thetaacc = (self.gravity * sintheta - costheta * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * costheta**2 / self.total_mass))
        xacc = temp - self.polemass_length * thetaacc * costheta / self.total_mass
        self.state = np.stack([
            x + self.tau * x_dot,
            x_dot + self.tau * xacc,
            theta + self.tau * theta_dot,
            theta_dot + self.tau * thetaacc,
        ], axis=1)
        terminated = (np.abs(self.state[:, 0]) > self.x_threshold) | (np.abs(self.state[:, 2]) > self.theta_threshold)
        return np.ones(self.num_envs), terminated


def angle_normalize(x):
    return ((x + np.pi) % (2 * np.pi)) - np.pi


class Pendulum(VecEnv):
    """Torque-controlled pendulum swing-up; continuing task cut at 200 steps.

    reward = -(theta^2 + 0.1 * theta_dot^2 + 0.001 * torque^2) with theta
    normalised to [-pi, pi); observations are (cos theta, sin theta, theta_dot).
    """

    name = "pendulum"
    default_max_episode_steps = 200

    max_speed = 8.0
    max_torque = 2.0
    dt = 0.05
    g = 10.0
    m = 1.0
    l = 1.0  # noqa: E741

    def __init__(self, num_envs=1, seed=0, max_episode_steps=None, **kw):
        super().__init__(num_envs, seed, max_episode_steps, **kw)
        high = np.array([1.0, 1.0, self.max_speed])
        self.observation_space = Box(-high, high)
        self.action_space = Box(-self.max_torque, self.max_torque, shape=(1,))
        self.theta = np.zeros(self.num_envs)
        self.theta_dot = np.zeros(self.num_envs)

    def _reset_rows(self, mask):
        k = int(mask.sum())
        self.theta[mask] = self.rng.uniform(-np.pi, np.pi, size=k)
        self.theta_dot[mask] = self.rng.uniform(-1.0, 1.0, size=k)

    def _observe(self):
        return np.stack([np.cos(self.theta), np.sin(self.theta), self.theta_dot], axis=1)

    def _advance(self, actions):
        u = np.clip(actions[:, 0], -self.max_torque, self.max_torque)
        th, thdot = self.theta, self.theta_dot
        costs = angle_normalize(th) ** 2 + 0.1 * thdot**2 + 0.001 * u**2
        new_thdot = thdot + (3 * self.g / (2 * self.l) * np.sin(th) + 3.0 / (self.m * self.l**2) * u) * self.dt
        new_thdot = np.clip(new_thdot, -self.max_speed, self.max_speed)
        self.theta = th + new_thdot * self.dt
        self.theta_dot = new_thdot
        return -costs, np.zeros(self.num_envs, dtype=bool)


class GridWorld(VecEnv):
    """Deterministic ``size x size`` grid; start in the top-left cell, goal bottom-right.

    Actions: 0 up, 1 right, 2 down, 3 left; moving into a wall leaves the agent
    in place.  Each step costs -1; entering the goal pays +10 and ends the
    episode.  Observations are the flat cell index ``row * size + col``.
    """

    name = "gridworld"
    default_max_episode_steps = 100
    moves = np.array([[-1, 0], [0, 1], [1, 0], [0, -1]])

    def __init__(self, num_envs=1, seed=0, max_episode_steps=None, size=5, **kw):
        if int(size) < 1 or int(size) != size:
            raise ValueError(f"gridworld size must be a positive integer, got {size!r}")
        super().__init__(num_envs, seed, max_episode_steps, **kw)
        self.size = int(size)
        self.goal = self.size * self.size - 1
        self.observation_space = Discrete(self.size * self.size)
        self.action_space = Discrete(4)
        self.cell = np.zeros(self.num_envs, dtype=np.int64)

    def _reset_rows(self, mask):
        self.cell[mask] = 0

    def _observe(self):
        return self.cell.astype(np.float64).reshape(-1, 1)

    def _advance(self, actions):
        a = actions[:, 0].astype(np.int64)
        row, col = np.divmod(self.cell, self.size)
        row = np.clip(row + self.moves[a, 0], 0, self.size - 1)
        col = np.clip(col + self.moves[a, 1], 0, self.size - 1)
        self.cell = row * self.size + col
        at_goal = self.cell == self.goal
        return np.where(at_goal, 10.0, -1.0), at_goal


class Echo(VecEnv):
    """Test environment that reports back the exact actions it received.

    ``infos["actions"]`` is a copy of the action batch; the reward of each row
    is its first action component and the observation is the in-episode step
    counter.
    """

    name = "echo"
    default_max_episode_steps = 50

    def __init__(self, num_envs=1, seed=0, max_episode_steps=None, action_dim=1, bound=1e6, **kw):
        if int(action_dim) < 1:
            raise ValueError("echo action_dim must be >= 1")
        super().__init__(num_envs, seed, max_episode_steps, **kw)
        self.observation_space = Box(0.0, float(self.max_episode_steps), shape=(1,))
        self.action_space = Box(-bound, bound, shape=(int(action_dim),))

    def _reset_rows(self, mask):
        pass

    def _observe(self):
        return self.episode_steps.astype(np.float64).reshape(-1, 1)

    def _advance(self, actions):
        return actions[:, 0].copy(), np.zeros(self.num_envs, dtype=bool)

    def _extra_infos(self, infos, actions):
        infos["actions"] = actions.copy()
