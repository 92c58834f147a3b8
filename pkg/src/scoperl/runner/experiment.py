"""Turn a validated :class:`ExperimentConfig` into environments, agents and runs."""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..agents import AGENTS
from ..envs import make_env
from ..memory import Memory
from ..trainers import MetricCallback, RunSummary, Scope, TrainerConfig, partition_scopes, sequential_train, \
    simultaneous_train
from .config import ConfigError, ExperimentConfig
from .metrics import JsonlSink


@dataclass
class Experiment:
    config: ExperimentConfig
    env: object
    agents: list
    scopes: list[Scope]
    shared_memory: Memory | None

    @property
    def sequential(self) -> bool:
        return len(self.agents) == 1 and self.config.agents[0].scope is None


def _seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def build_experiment(cfg: ExperimentConfig, num_envs: int | None = None) -> Experiment:
    """Instantiate the env, agents and (optional) shared memory described by ``cfg``.

    ``num_envs`` overrides the env size, which is only allowed for
    single-agent configs (used by evaluation).
    """
    n_agents = len(cfg.agents)
    env_seed, memory_seed, *agent_seeds = _seeds(cfg.seed, n_agents + 2)
    if num_envs is not None and n_agents > 1:
        raise ValueError("num_envs can only be overridden for single-agent configs")
    total_envs = num_envs or cfg.env.num_envs
    env = make_env(cfg.env.name, total_envs, seed=env_seed, params=cfg.env.params)
    counts = None if num_envs is not None else cfg.scope_counts
    scopes = partition_scopes(total_envs, counts, n_agents)

    sharing = [a for a in cfg.agents if a.share_memory]
    shared = None
    if sharing:
        if any("memory_size" not in a.hyperparameters for a in sharing):
            raise ConfigError("only replay-memory agents can share memory", "agents")
        rows = sum(s.count for a, s in zip(cfg.agents, scopes) if a.share_memory)
        shared = Memory(max(a.hyperparameters["memory_size"] for a in sharing), rows, seed=memory_seed)

    agents = []
    for block, scope, seed in zip(cfg.agents, scopes, agent_seeds):
        cls = AGENTS[block.type]
        agents.append(cls(env.observation_space, env.action_space, cfg=dict(block.hyperparameters),
                          models=block.models, memory=shared if block.share_memory else None,
                          num_envs=scope.count, seed=seed, agent_id=block.id))
    return Experiment(cfg, env, agents, scopes, shared)


class _Progress(MetricCallback):
    """Forward records to the metric file and print a short line on each flush."""

    def __init__(self, inner: MetricCallback, total: int, stream=sys.stderr):
        self.inner = inner
        self.total = total
        self.stream = stream
        self.latest: dict[str, float] = {}
        self.step = 0

    def log(self, timestep, agent_id, name, value):
        self.inner.log(timestep, agent_id, name, value)
        self.step = max(self.step, timestep + 1)
        if name == "episode_return":
            self.latest[agent_id] = value

    def flush(self):
        self.inner.flush()
        returns = "  ".join(f"{k}={v:.1f}" for k, v in sorted(self.latest.items()))
        print(f"[{self.step}/{self.total}] {returns}", file=self.stream, flush=True)


def run_training(exp: Experiment, sink: MetricCallback | None = None, stop_fn=None) -> RunSummary:
    cfg = exp.config
    tcfg = TrainerConfig(cfg.trainer.total_timesteps, cfg.trainer.log_interval, cfg.trainer.eval_interval, cfg.seed)
    if exp.sequential:
        return sequential_train(exp.agents[0], exp.env, tcfg, sink, stop_fn=stop_fn)
    return simultaneous_train(exp.agents, exp.scopes, exp.env, tcfg, sink, stop_fn=stop_fn)


def train(cfg: ExperimentConfig, outdir, headless: bool = True, wall_clock: bool = False,
          export_memory: str | None = None) -> RunSummary:
    """Run ``cfg`` and write ``metrics.jsonl``, ``config.yaml``, checkpoints and ``summary.json`` under ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.yaml").write_text(cfg.dumps(), encoding="utf-8")
    exp = build_experiment(cfg)
    metadata = {"config_digest": cfg.digest(), "seed": cfg.seed, "version": __version__,
                "agents": [a.id for a in cfg.agents], "env": cfg.env.name, "num_envs": cfg.env.num_envs}
    with JsonlSink(outdir / "metrics.jsonl", metadata, wall_clock=wall_clock) as sink:
        callback = sink if headless else _Progress(sink, cfg.trainer.total_timesteps)
        summary = run_training(exp, callback)
        for agent_id, s in summary.agents.items():
            sink.log(summary.timesteps, agent_id, "summary/episodes", s.episodes)
            if s.mean_return is not None:
                sink.log(summary.timesteps, agent_id, "summary/mean_return", s.mean_return)
                sink.log(summary.timesteps, agent_id, "summary/std_return", s.std_return)
            sink.log(summary.timesteps, agent_id, "summary/timesteps", summary.timesteps)

    ckpt = outdir / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    for agent in exp.agents:
        agent.save(ckpt / f"{agent.agent_id}.sktn")
    if export_memory:
        _export_memories(exp, outdir / "memory", export_memory)
    (outdir / "summary.json").write_text(json.dumps(summary.as_dict(), indent=2, sort_keys=True) + "\n")
    return summary


def _export_memories(exp: Experiment, directory: Path, fmt: str) -> None:
    directory.mkdir(exist_ok=True)
    seen = set()
    for agent in exp.agents:
        mem = agent.memory
        if mem is None or id(mem) in seen or mem.stored_count == 0:
            continue
        seen.add(id(mem))
        name = "shared" if mem is exp.shared_memory else agent.agent_id
        mem.export(directory / f"{name}.{fmt}", fmt)


def evaluate(cfg: ExperimentConfig, checkpoint_dir, episodes: int = 10, seed: int | None = None) -> dict[str, float]:
    """Mean undiscounted return of each agent's deterministic policy over ``episodes`` episodes."""
    results = {}
    checkpoint_dir = Path(checkpoint_dir)
    for block in cfg.agents:
        single = ExperimentConfig(cfg.env, cfg.trainer, [block], cfg.seed if seed is None else seed, cfg.outdir)
        exp = build_experiment(single, num_envs=1)
        agent = exp.agents[0]
        path = checkpoint_dir / f"{block.id}.sktn"
        if not path.exists():
            raise FileNotFoundError(f"missing checkpoint {path}")
        agent.load(path)
        returns = []
        states = exp.env.reset()
        total, t = 0.0, 0
        while len(returns) < episodes:
            actions = agent.act(states, t, deterministic=True)
            states, rewards, dones, _ = exp.env.step(actions)
            total += float(rewards[0])
            t += 1
            if dones[0]:
                returns.append(total)
                total = 0.0
        results[block.id] = float(np.mean(returns))
    return results
