import csv
import dataclasses
import json

import numpy as np
import pytest
import yaml

from scoperl.runner import (
    ConfigError, JsonlSink, MetricLogError, MetricRecord, bundled_configs, load_config, loads, main,
    read_metric_log, train,
)
from scoperl.runner.cli import memory_stats, summarize_metric_log
from scoperl.runner.experiment import build_experiment

BASIC = """
seed: 3
env: {name: cartpole, num_envs: 4}
trainer: {total_timesteps: 50, log_interval: 10}
agents:
  - type: ppo
    id: learner
    models:
      policy: {hidden: [8]}
      value: {hidden: [8]}
    hyperparameters: {rollouts: 8}
"""


def short(name, steps=100):
    cfg = load_config(name)
    return dataclasses.replace(cfg, trainer=dataclasses.replace(cfg.trainer, total_timesteps=steps))


# -- config --------------------------------------------------------------

def test_config_round_trips_through_yaml():
    cfg = loads(BASIC)
    again = loads(cfg.dumps())
    assert again == cfg
    assert again.digest() == cfg.digest()
    assert cfg.agents[0].hyperparameters["rollouts"] == 8
    assert "discount_factor" in cfg.agents[0].hyperparameters  # defaults are filled in


def test_scope_counts_must_sum_to_num_envs():
    raw = yaml.safe_load(load_config("scopes_512_shared").dumps())
    raw["agents"][2]["scope"] = 160
    with pytest.raises(ConfigError) as err:
        loads(yaml.safe_dump(raw))
    assert "500" in str(err.value) and "512" in str(err.value)
    assert err.value.field_path is not None and "scope" in err.value.field_path


def test_parse_error_reports_line():
    with pytest.raises(ConfigError) as err:
        loads("seed: 1\nenv: {name: cartpole\ntrainer: {total_timesteps: 5}\n")
    assert err.value.line is not None and err.value.line >= 2


def test_unknown_keys_are_rejected_with_location():
    text = BASIC.replace("hyperparameters: {rollouts: 8}", "hyperparameters: {rollouts: 8, rollout: 3}")
    with pytest.raises(ConfigError) as err:
        loads(text)
    assert "rollout" in str(err.value)
    assert err.value.line == 11
    with pytest.raises(ConfigError):
        loads(BASIC + "extra: 1\n")
    with pytest.raises(ConfigError):
        loads(BASIC.replace("type: ppo", "type: nope"))
    with pytest.raises(ConfigError):
        loads(BASIC.replace("name: cartpole", "name: mountaincar"))


def test_duplicate_agent_ids_rejected():
    raw = yaml.safe_load(BASIC)
    raw["agents"].append(dict(raw["agents"][0]))
    with pytest.raises(ConfigError, match="learner"):
        loads(yaml.safe_dump(raw))


def test_bundled_configs_are_present():
    assert set(bundled_configs()) >= {"pendulum_ddpg", "pendulum_td3", "pendulum_sac", "cartpole_ppo_512",
                                      "cartpole_dqn", "cartpole_trpo", "gridworld_qlearning", "gridworld_sarsa",
                                      "scopes_512_shared", "scopes_512_private"}


@pytest.mark.parametrize("name", sorted(bundled_configs()))
def test_every_bundled_config_runs(name, tmp_path):
    cfg = short(name, 100)
    summary = train(cfg, tmp_path)
    assert summary.timesteps == 100
    header, records = read_metric_log(tmp_path / "metrics.jsonl")
    assert header["config_digest"] == cfg.digest()
    assert {r["agent_id"] for r in records} == {a.id for a in cfg.agents}
    for agent in cfg.agents:
        assert (tmp_path / "checkpoints" / f"{agent.id}.sktn").exists()


def test_shared_memory_is_one_object():
    exp = build_experiment(short("scopes_512_shared", 1))
    assert exp.shared_memory is not None
    assert all(a.memory is exp.shared_memory for a in exp.agents)
    private = build_experiment(short("scopes_512_private", 1))
    assert private.shared_memory is None
    assert len({id(a.memory) for a in private.agents}) == 3


# -- metric sink ---------------------------------------------------------

def test_sink_writes_one_line_per_record(tmp_path):
    path = tmp_path / "m.jsonl"
    with JsonlSink(path, {"seed": 1}) as sink:
        for t in range(100):
            sink.log(t, "a", "loss", float(t))
    header, records = read_metric_log(path)
    assert header["seed"] == 1 and header["kind"] == "header"
    assert len(records) == 100
    assert records[5] == {"timestep": 5, "agent_id": "a", "metric": "loss", "value": 5.0}
    assert len(path.read_text().splitlines()) == 101


def test_empty_sink_has_only_header(tmp_path):
    path = tmp_path / "m.jsonl"
    JsonlSink(path, {}).close()
    assert len(path.read_text().splitlines()) == 1


def test_sink_rejects_backwards_timesteps(tmp_path):
    with JsonlSink(tmp_path / "m.jsonl", {}) as sink:
        sink.log(5, "a", "x", 1.0)
        sink.log(3, "b", "x", 1.0)  # other agents are tracked separately
        with pytest.raises(MetricLogError):
            sink.log(4, "a", "x", 1.0)


def test_non_finite_values_become_null():
    assert json.loads(MetricRecord(0, "a", "x", float("nan")).to_json())["value"] is None


def test_wall_clock_is_opt_in(tmp_path):
    with JsonlSink(tmp_path / "a.jsonl", {}) as sink:
        sink.log(0, "a", "x", 1.0)
    with JsonlSink(tmp_path / "b.jsonl", {}, wall_clock=True) as sink:
        sink.log(0, "a", "x", 1.0)
    assert "wall_clock" not in read_metric_log(tmp_path / "a.jsonl")[1][0]
    assert "wall_clock" in read_metric_log(tmp_path / "b.jsonl")[1][0]


def test_sink_reports_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(MetricLogError):
        JsonlSink(blocker / "m.jsonl", {})


# -- CLI -----------------------------------------------------------------

def test_cli_train_eval_report_and_memory_stats(tmp_path, capsys):
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text(BASIC)
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg_path), "--outdir", str(out), "--headless",
                 "--export-memory", "csv", "--timesteps", "60"]) == 0
    assert (out / "summary.json").exists() and (out / "config.yaml").exists()

    assert main(["eval", "--config", str(cfg_path), "--outdir", str(out), "--episodes", "2"]) == 0
    printed = capsys.readouterr().out
    assert "learner" in printed

    assert main(["report", "--metrics", str(out / "metrics.jsonl"), "--out", str(tmp_path / "r.csv")]) == 0
    rows = list(csv.DictReader((tmp_path / "r.csv").open()))
    _, records = read_metric_log(out / "metrics.jsonl")
    episodes = sum(1 for r in records if r["metric"] == "episode_return")
    assert len(rows) == 1 and int(rows[0]["episodes"]) == episodes

    memfile = next((out / "memory").iterdir())
    assert main(["export-memory-stats", "--memory", str(memfile), "--out", str(tmp_path / "s.csv")]) == 0
    stats = list(csv.DictReader((tmp_path / "s.csv").open()))
    assert {r["tensor"] for r in stats} >= {"states", "actions", "rewards"}


def test_report_groups_by_agent(tmp_path):
    path = tmp_path / "m.jsonl"
    with JsonlSink(path, {}) as sink:
        for t, (agent, ret) in enumerate([("a", 1.0), ("b", 5.0), ("a", 3.0), ("b", 7.0), ("b", 9.0)]):
            sink.log(t, agent, "episode_return", ret)
        sink.log(9, "a", "loss", 0.1)
    rows = {r["agent_id"]: r for r in summarize_metric_log(path)}
    assert rows["a"]["episodes"] == 2 and rows["a"]["mean_return"] == 2.0
    assert rows["b"]["episodes"] == 3 and rows["b"]["max_return"] == 9.0
    assert rows["a"]["last_timestep"] == 9


def test_memory_stats_columns(tmp_path):
    from scoperl.memory import Memory
    mem = Memory(4, 1)
    mem.create_tensor("x", 2)
    mem.add_samples({"x": np.array([[1.0, 10.0], [3.0, 30.0]])})
    mem.export(tmp_path / "m.csv", "csv")
    stats = {(r["tensor"], r["dim"]): r for r in memory_stats(tmp_path / "m.csv")}
    assert stats[("x", 0)]["mean"] == 2.0 and stats[("x", 1)]["max"] == 30.0


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(BASIC + "bogus: 1\n")
    assert main(["train", "--config", str(bad), "--outdir", str(tmp_path / "o")]) == 2
    assert "bogus" in capsys.readouterr().err
    assert main(["train", "--config", str(tmp_path / "missing.yaml")]) == 2
    good = tmp_path / "good.yaml"
    good.write_text(BASIC)
    assert main(["eval", "--config", str(good), "--checkpoints", str(tmp_path / "nowhere")]) == 1
    assert "missing checkpoint" in capsys.readouterr().err


def test_cli_seed_override_changes_results(tmp_path):
    good = tmp_path / "good.yaml"
    good.write_text(BASIC)
    for seed in (1, 2):
        assert main(["train", "--config", str(good), "--outdir", str(tmp_path / str(seed)), "--seed", str(seed),
                     "--headless"]) == 0
    a = json.loads((tmp_path / "1" / "summary.json").read_text())
    b = json.loads((tmp_path / "2" / "summary.json").read_text())
    assert a["digest"] != b["digest"]
