from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest

from berlinucb.env import RevealSchedule
from berlinucb.errors import ConfigError
from berlinucb.harness import (
    TRACE_HEADER,
    GridConfig,
    MetricsTrace,
    RunConfig,
    check_reveal_concentration,
    emit_trace,
    expected_reveal_stats,
    grid_runs,
    run_experiment,
    run_grid,
    run_replica,
)

from conftest import MNIST_IMAGES, MNIST_LABELS

AGENTS = ["linucb", "berlin", "b-kmeans", "b-knn", "b-gmm"]


def blobs(**over) -> dict:
    doc = {
        "dataset": {"kind": "blobs", "classes": 3, "dimension": 20, "separation": 10.0, "noise": 1.0},
        "scenario": {"name": "stationary", "total_steps": 600, "batch_size": 100},
        "reveal": {"kind": "fixed", "p": 1.0},
        "agent": {"name": "linucb"},
        "seed": 0,
    }
    doc.update(over)
    return doc


def mnist(**over) -> dict:
    doc = {
        "dataset": {"kind": "idx", "images": str(MNIST_IMAGES), "labels": str(MNIST_LABELS), "limit": 500, "pool": 4},
        "scenario": {"name": "stationary", "total_steps": 300},
        "reveal": {"kind": "fixed", "p": 0.5},
        "agent": {"name": "b-knn"},
        "seed": 1,
    }
    doc.update(over)
    return doc


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- configuration ----------------------------------------------------------

def test_schema_rejects_bad_documents():
    with pytest.raises(ConfigError, match="agent"):
        RunConfig.from_dict(blobs(agent={"name": "thompson"}))
    with pytest.raises(ConfigError):
        RunConfig.from_dict(blobs(reveal={"kind": "fixed", "p": 2}))
    with pytest.raises(ConfigError):
        RunConfig.from_dict(blobs(bogus=1))
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"dataset": {"kind": "idx"}})


def test_semantic_validation():
    with pytest.raises(ConfigError, match="not found"):
        RunConfig.from_dict(mnist(dataset={"kind": "idx", "images": "nope", "labels": "nope"})).validate()
    with pytest.raises(ConfigError, match="blobs"):
        RunConfig.from_dict(blobs(scenario={"name": "shuffled_labels"})).validate()
    with pytest.raises(ConfigError, match="dataset_b"):
        RunConfig.from_dict(mnist(scenario={"name": "multitask"})).validate()
    with pytest.raises(ConfigError, match="CSV"):
        RunConfig.from_dict(mnist(scenario={"name": "stream"})).validate()


def test_config_round_trip():
    cfg = RunConfig.from_dict(mnist(reveal={"kind": "per_batch", "values": [0.5, 0.1]}))
    again = RunConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()


# -- traces ------------------------------------------------------------------

def test_trace_row_count_and_invariants():
    cfg = RunConfig.from_dict(blobs(scenario={"name": "stationary", "total_steps": 5000}))
    trace = run_replica(cfg, 0)
    assert len(trace.rows) == 501
    assert [r[0] for r in trace.rows[1:]] == list(range(10, 5001, 10))
    cums = [r[1] for r in trace.rows]
    assert cums == sorted(cums)
    for step, cum, _, acc, err, _ in trace.rows:
        assert err + cum == step and 0.0 <= acc <= 1.0
    assert trace.final_accuracy == trace.cumulative_reward / 5000


def test_trace_final_row_when_unaligned():
    cfg = RunConfig.from_dict(blobs(scenario={"name": "stationary", "total_steps": 25}))
    cfg.trace_stride = 10
    assert [r[0] for r in run_replica(cfg, 0).rows] == [0, 10, 20, 25]


def test_emit_trace_files(tmp_path):
    cfg = RunConfig.from_dict(mnist())
    trace = run_replica(cfg, 0)
    emit_trace(trace, tmp_path / "t.csv", cfg)
    rows = read_rows(tmp_path / "t.csv")
    assert tuple(rows[0]) == TRACE_HEADER
    summary = json.loads((tmp_path / "t.json").read_text())
    assert float(rows[-1][3]) == summary["final_accuracy"]
    assert int(rows[-1][1]) == summary["final_cumulative_reward"]
    assert summary["seed"] == 1 and summary["config"]["agent"]["name"] == "b-knn"
    assert "wall_time_seconds" in summary


def test_empty_trace_is_header_only(tmp_path):
    emit_trace(MetricsTrace(), tmp_path / "e.csv")
    assert read_rows(tmp_path / "e.csv") == [list(TRACE_HEADER)]


def test_run_experiment_is_bitwise_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        cfg = RunConfig.from_dict(mnist(replicas=2, out=str(tmp_path / name)))
        run_experiment(cfg)
        outs.append([(tmp_path / name / f"trace_r{r}.csv").read_bytes() for r in range(2)])
    assert outs[0] == outs[1]
    assert outs[0][0] != outs[0][1]


def test_replicas_independent_of_execution(tmp_path):
    parallel = RunConfig.from_dict(mnist(replicas=3, workers=3, out=str(tmp_path / "p")))
    run_experiment(parallel)
    single = RunConfig.from_dict(mnist(seed=3, out=str(tmp_path / "s")))
    run_experiment(single)
    assert (tmp_path / "p" / "trace_r2.csv").read_bytes() == (tmp_path / "s" / "trace_r0.csv").read_bytes()


def test_learning_sanity_on_blobs():
    cfg = RunConfig.from_dict(blobs(scenario={"name": "stationary", "total_steps": 3000}))
    assert run_replica(cfg, 0).window_accuracy(1000) > 0.95


def test_hidden_only_skip_updates_is_chance():
    K, T = 3, 3000
    cfg = RunConfig.from_dict(blobs(scenario={"name": "stationary", "total_steps": T},
                                    reveal={"kind": "fixed", "p": 0.0},
                                    agent={"name": "linucb", "skip_all_updates_when_hidden": True}))
    acc = run_replica(cfg, 0).final_accuracy
    assert abs(acc - 1 / K) <= 3 * math.sqrt((1 / K) * (1 - 1 / K) / T)


def test_extendable_run_spawns_arms():
    cfg = RunConfig.from_dict(mnist(arms="extendable", reveal={"kind": "fixed", "p": 1.0}))
    trace = run_replica(cfg, 0)
    arms = [r[5] for r in trace.rows]
    assert arms[0] == 1 and arms == sorted(arms) and arms[-1] > 1
    assert len(trace.diagnostics["mapping"]) == arms[-1] - 1


def test_reveal_concentration_helpers():
    sched = RevealSchedule.cycle([0.5, 0.01])
    mean, sd = expected_reveal_stats(sched, 1000, 100)
    assert mean == pytest.approx(0.255)
    assert sd == pytest.approx(math.sqrt(500 * 0.25 + 500 * 0.0099) / 1000)
    cfg = RunConfig.from_dict(blobs(scenario={"name": "stationary", "total_steps": 2000},
                                    reveal={"kind": "per_batch", "values": [0.5, 0.01]}))
    assert check_reveal_concentration(run_replica(cfg, 0), cfg.reveal, cfg.batch_size)


@pytest.mark.parametrize("scenario", ["cluster_drift", "negative_images", "shuffled_labels"])
def test_scenarios_run_end_to_end(scenario):
    trace = run_replica(RunConfig.from_dict(mnist(scenario={"name": scenario, "total_steps": 200})), 0)
    assert trace.steps == 200


def test_stream_scenario_from_csv(tmp_path):
    from berlinucb.data import synthetic_feature_table, write_labelled_csv
    X, y = synthetic_feature_table(3, 40, 4, 6.0, 1.0, seed=0)
    write_labelled_csv(tmp_path / "s.csv", X, y)
    cfg = RunConfig.from_dict({
        "dataset": {"kind": "csv", "path": "s.csv", "label_column": "label", "limit": None},
        "scenario": {"name": "stream", "params": {"segment_length_range": [10, 10], "n_segments": 12}},
        "reveal": {"kind": "fixed", "p": 0.1}, "agent": {"name": "b-knn"},
    }, base_dir=tmp_path)
    assert run_replica(cfg.validate(), 0).steps == 120


# -- grids -------------------------------------------------------------------

def test_grid_counts(tmp_path):
    grid = GridConfig.from_dict({
        "base": blobs(scenario={"name": "stationary", "total_steps": 40}),
        "agents": AGENTS, "scenarios": ["stationary"], "reveal": [1.0, 0.1, 0.01], "seeds": [0, 1, 2],
        "out": str(tmp_path),
    })
    assert len(grid_runs(grid)) == 45
    result = run_grid(grid)
    assert len(result["runs"]) == 45
    assert sum(len(v) for v in result["table"].values()) == 15
    rows = read_rows(tmp_path / "table.csv")
    assert len(rows) == 6 and len(rows[0]) == 4
    assert not (tmp_path / "diagnostics.json").exists()


def test_single_cell_grid_equals_run_mean():
    base = blobs(scenario={"name": "stationary", "total_steps": 300}, reveal={"kind": "fixed", "p": 0.3})
    grid = GridConfig.from_dict({"base": base, "agents": ["b-knn"], "scenarios": ["stationary"],
                                 "reveal": [0.3], "seeds": [4, 5]})
    result = run_grid(grid)
    accs = [run_replica(RunConfig.from_dict({**base, "agent": {"name": "b-knn"}, "seed": s}), 0).final_accuracy
            for s in (4, 5)]
    assert result["table"]["b-knn"]["stationary|fixed|pr=0.3"] == pytest.approx(np.mean(accs), abs=0)


def test_grid_partial_failure_writes_diagnostics(tmp_path):
    grid = GridConfig.from_dict({
        "base": mnist(), "agents": ["linucb"],
        "scenarios": ["stationary", {"name": "multitask"}], "reveal": [0.5], "seeds": [0],
        "out": str(tmp_path),
    })
    result = run_grid(grid)
    assert result["table"]["linucb"]["multitask|fixed|pr=0.5"] is None
    assert result["table"]["linucb"]["stationary|fixed|pr=0.5"] is not None
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag[0]["cell"].startswith("multitask")
