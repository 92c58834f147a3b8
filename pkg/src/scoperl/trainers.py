"""Agent-environment interaction loops.

``sequential_train`` drives one agent over every sub-environment.
``simultaneous_train`` splits the sub-environments into contiguous scopes,
one per agent: each timestep every agent acts on its own rows, the rows are
assembled into a single action batch, the environment is stepped once, and
the results are sliced back to their owners.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .envs.base import VecEnv


@dataclass(frozen=True)
class Scope:
    offset: int
    count: int

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.count)

    def __contains__(self, row: int) -> bool:
        return self.offset <= row < self.offset + self.count


@dataclass
class TrainerConfig:
    total_timesteps: int
    log_interval: int = 1000
    eval_interval: int | None = None
    seed: int = 0
    headless: bool = True

    def __post_init__(self):
        if self.total_timesteps < 0:
            raise ValueError("total_timesteps must be >= 0")
        if self.log_interval < 1:
            raise ValueError("log_interval must be >= 1")


@dataclass
class AgentSummary:
    agent_id: str
    episodes: int = 0
    mean_return: float | None = None
    std_return: float | None = None
    returns: list[float] = field(default_factory=list, repr=False)

    def recent_mean(self, window: int) -> float | None:
        if not self.returns:
            return None
        return float(np.mean(self.returns[-window:]))


@dataclass
class RunSummary:
    timesteps: int
    env_steps: int
    wall_time: float
    agents: dict[str, AgentSummary]
    digest: str

    def as_dict(self) -> dict:
        return {
            "timesteps": self.timesteps,
            "env_steps": self.env_steps,
            "wall_time": self.wall_time,
            "digest": self.digest,
            "agents": {k: {"episodes": a.episodes, "mean_return": a.mean_return, "std_return": a.std_return}
                       for k, a in self.agents.items()},
        }


def partition_scopes(num_envs: int, requested: Sequence[int] | None, num_agents: int) -> list[Scope]:
    """Split ``num_envs`` rows into one contiguous scope per agent.

    Explicit counts are honoured in order.  Without a request every agent gets
    ``num_envs // num_agents`` rows and the remainder goes to the last agent.
    """
    if num_agents < 1:
        raise ValueError("need at least one agent")
    if requested:
        counts = [int(c) for c in requested]
        if len(counts) != num_agents:
            raise ValueError(f"got {len(counts)} scope counts for {num_agents} agents")
        if sum(counts) != num_envs:
            raise ValueError(f"scope counts sum to {sum(counts)}, expected num_envs={num_envs}")
    else:
        base = num_envs // num_agents
        counts = [base] * num_agents
        counts[-1] += num_envs - base * num_agents
    if any(c <= 0 for c in counts):
        raise ValueError(f"every scope needs at least one environment, got {counts}")
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
    return [Scope(int(o), int(c)) for o, c in zip(offsets, counts)]


class MetricCallback:
    """Receives metric records from a trainer; see :mod:`scoperl.runner.metrics`."""

    def log(self, timestep: int, agent_id: str, name: str, value: float) -> None:
        pass

    def flush(self) -> None:
        pass


def _check_compatible(agent, env: VecEnv) -> None:
    if not agent.action_space.compatible(env.action_space):
        raise ValueError(f"agent {agent.agent_id!r} action space does not match the environment's")
    if not agent.observation_space.compatible(env.observation_space):
        raise ValueError(f"agent {agent.agent_id!r} observation space does not match the environment's")


class _EpisodeTracker:
    def __init__(self, agent_id: str, rows: int):
        self.summary = AgentSummary(agent_id)
        self.running = np.zeros(rows)
        self.hasher = hashlib.sha256()

    def update(self, rewards, dones, timestep: int, sink: MetricCallback | None) -> None:
        self.running += rewards
        for row in np.flatnonzero(dones):
            ret = float(self.running[row])
            self.summary.returns.append(ret)
            self.hasher.update(np.float64(ret).tobytes())
            if sink is not None:
                sink.log(timestep, self.summary.agent_id, "episode_return", ret)
        self.running[dones] = 0.0

    def finish(self) -> AgentSummary:
        s = self.summary
        s.episodes = len(s.returns)
        if s.returns:
            s.mean_return = float(np.mean(s.returns))
            s.std_return = float(np.std(s.returns))
        return s


def _log_agent_metrics(agent, timestep: int, sink: MetricCallback | None) -> None:
    metrics = agent.pop_metrics()
    if sink is not None:
        for name in sorted(metrics):
            sink.log(timestep, agent.agent_id, name, metrics[name])


def _digest(trackers) -> str:
    h = hashlib.sha256()
    for tr in trackers:
        h.update(tr.summary.agent_id.encode())
        h.update(tr.hasher.digest())
    return h.hexdigest()


def sequential_train(agent, env: VecEnv, cfg: TrainerConfig, sink: MetricCallback | None = None,
                     stop_fn=None) -> RunSummary:
    """Train one agent on every sub-environment of ``env``.

    ``stop_fn(summaries)`` is polled every ``log_interval`` steps with the
    per-agent :class:`AgentSummary` objects; returning true ends the run early.
    """
    _check_compatible(agent, env)
    start = time.perf_counter()
    tracker = _EpisodeTracker(agent.agent_id, env.num_envs)
    states = env.reset() if cfg.total_timesteps > 0 else None
    steps = 0
    for t in range(cfg.total_timesteps):
        actions = agent.act(states, t)
        next_states, rewards, dones, infos = env.step(actions)
        agent.record_transition(states, actions, rewards, infos["terminal_observation"], infos["terminated"],
                                infos["truncated"], t)
        agent.post_interaction(t)
        tracker.update(rewards, dones, t, sink)
        states = next_states
        steps = t + 1
        if steps % cfg.log_interval == 0:
            _log_agent_metrics(agent, t, sink)
            if sink is not None:
                sink.flush()
            if stop_fn is not None and stop_fn({agent.agent_id: tracker.summary}):
                break
    if sink is not None:
        sink.flush()
    return RunSummary(steps, steps * env.num_envs, time.perf_counter() - start,
                      {agent.agent_id: tracker.finish()}, _digest([tracker]))


def simultaneous_train(agents: Sequence, scopes: Sequence[Scope], env: VecEnv, cfg: TrainerConfig,
                       sink: MetricCallback | None = None, step_hook=None, stop_fn=None) -> RunSummary:
    """Train several agents at once, each on its own scope of ``env``.

    Per timestep, in agent order: act on the scope's rows; then one
    ``env.step`` on the assembled action batch; then every agent records its
    slice of the results, then every agent runs its update.  ``step_hook``,
    when given, is called as ``step_hook(t, actions, result)`` after each step.
    """
    if len(agents) != len(scopes):
        raise ValueError(f"{len(agents)} agents but {len(scopes)} scopes")
    ids = [a.agent_id for a in agents]
    if len(set(ids)) != len(ids):
        raise ValueError(f"agent ids must be distinct, got {ids}")
    covered = sorted((s.offset, s.count) for s in scopes)
    position = 0
    for offset, count in covered:
        if offset != position or count <= 0:
            raise ValueError("scopes must be disjoint, contiguous and cover every environment")
        position += count
    if position != env.num_envs:
        raise ValueError(f"scopes cover {position} environments, env has {env.num_envs}")
    for agent in agents:
        _check_compatible(agent, env)
    act_dim = env.action_space.dim

    start = time.perf_counter()
    trackers = [_EpisodeTracker(a.agent_id, s.count) for a, s in zip(agents, scopes)]
    states = env.reset() if cfg.total_timesteps > 0 else None
    steps = 0
    for t in range(cfg.total_timesteps):
        actions = np.empty((env.num_envs, act_dim))
        for agent, scope in zip(agents, scopes):
            scoped = np.asarray(agent.act(states[scope.slice], t), dtype=np.float64)
            if scoped.shape != (scope.count, act_dim):
                raise ValueError(f"agent {agent.agent_id!r} returned actions of shape {scoped.shape}, "
                                 f"expected {(scope.count, act_dim)}")
            actions[scope.slice] = scoped
        result = env.step(actions)
        next_states, rewards, dones, infos = result
        if step_hook is not None:
            step_hook(t, actions, result)
        terminal = infos["terminal_observation"]
        for agent, scope in zip(agents, scopes):
            sl = scope.slice
            agent.record_transition(states[sl], actions[sl], rewards[sl], terminal[sl], infos["terminated"][sl],
                                    infos["truncated"][sl], t)
        for agent in agents:
            agent.post_interaction(t)
        for tracker, scope in zip(trackers, scopes):
            tracker.update(rewards[scope.slice], dones[scope.slice], t, sink)
        states = next_states
        steps = t + 1
        if steps % cfg.log_interval == 0:
            for agent in agents:
                _log_agent_metrics(agent, t, sink)
            if sink is not None:
                sink.flush()
            if stop_fn is not None and stop_fn({tr.summary.agent_id: tr.summary for tr in trackers}):
                break
    if sink is not None:
        sink.flush()
    return RunSummary(steps, steps * env.num_envs, time.perf_counter() - start,
                      {tr.summary.agent_id: tr.finish() for tr in trackers}, _digest(trackers))
