"""Experiment runner: configuration, the interaction loop, metrics and grids.

One replica runs the episodic-reward protocol for ``total_steps`` rounds::

    sample -> agent.select -> env.reveal -> reward -> agent.observe

The true reward is counted every round whether or not it was revealed.
Replica ``r`` uses master seed ``seed + r``; the environment and the agent's
tie-break stream derive from it (see :mod:`berlinucb.rng`), so a replica's
output does not depend on which other replicas run or in what order.
"""

from __future__ import annotations

import copy
import csv
import functools
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import env as envmod
from . import rng as rngmod
from .bandit import Agent, AgentConfig, Feedback, HIDDEN, extendable_step
from .data import Dataset, load_idx, load_labelled_csv, pool_downsample
from .errors import BerlinError, ConfigError, InvalidArgumentError

log = logging.getLogger(__name__)

TRACE_HEADER = ("step", "cumulative_reward", "revealed_count", "accuracy", "errors", "arm_count")
SCENARIOS = ("stationary", "cluster_drift", "negative_images", "shuffled_labels", "multitask", "extendable", "stream")
DEFAULT_TRACE_STRIDE = 10


@functools.lru_cache(maxsize=1)
def config_schema() -> dict:
    text = resources.files("berlinucb").joinpath("schema/run_config.schema.json").read_text()
    return json.loads(text)


# -- configuration ----------------------------------------------------------

@dataclass
class RunConfig:
    dataset: dict
    dataset_b: dict | None = None
    scenario: str = "stationary"
    scenario_params: dict = field(default_factory=dict)
    batch_size: int = envmod.DEFAULT_BATCH_SIZE
    total_steps: int = envmod.DEFAULT_TOTAL_STEPS
    arms: str = "fixed"
    reveal: envmod.RevealSchedule = field(default_factory=lambda: envmod.RevealSchedule.fixed(1.0))
    agent: dict = field(default_factory=lambda: {"name": "linucb"})
    seed: int = 0
    replicas: int = 1
    trace_stride: int = DEFAULT_TRACE_STRIDE
    workers: int = 1
    out: str | None = None
    base_dir: str = "."

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "RunConfig":
        try:
            jsonschema.validate(doc, config_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from None
        scen = doc.get("scenario", {})
        reveal = doc.get("reveal", {"kind": "fixed", "p": 1.0})
        schedule = (envmod.RevealSchedule.fixed(reveal["p"]) if reveal["kind"] == "fixed"
                    else envmod.RevealSchedule.cycle(reveal["values"]))
        return cls(
            dataset=dict(doc["dataset"]),
            dataset_b=dict(doc["dataset_b"]) if doc.get("dataset_b") else None,
            scenario=scen.get("name", "stationary"),
            scenario_params=dict(scen.get("params", {})),
            batch_size=scen.get("batch_size", envmod.DEFAULT_BATCH_SIZE),
            total_steps=scen.get("total_steps", envmod.DEFAULT_TOTAL_STEPS),
            arms=doc.get("arms", "fixed"),
            reveal=schedule,
            agent={"name": "linucb", **doc.get("agent", {})},
            seed=doc.get("seed", 0),
            replicas=doc.get("replicas", 1),
            trace_stride=doc.get("trace_stride", DEFAULT_TRACE_STRIDE),
            workers=doc.get("workers", 1),
            out=doc.get("out"),
            base_dir=str(base_dir),
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "dataset_b": self.dataset_b,
            "scenario": {"name": self.scenario, "batch_size": self.batch_size,
                         "total_steps": self.total_steps, "params": self.scenario_params},
            "arms": self.arms,
            "reveal": self.reveal.to_dict(),
            "agent": self.agent,
            "seed": self.seed,
            "replicas": self.replicas,
            "trace_stride": self.trace_stride,
            "workers": self.workers,
            "out": self.out,
        }

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def validate(self) -> "RunConfig":
        """Semantic checks beyond the schema; raises ConfigError before any work."""
        problems = []
        if self.scenario not in SCENARIOS:
            problems.append(f"unknown scenario {self.scenario!r}")
        if self.replicas < 1 or self.trace_stride < 1 or self.batch_size < 1 or self.total_steps < 1:
            problems.append("replicas, trace_stride, batch_size and total_steps must be >= 1")
        for spec in filter(None, (self.dataset, self.dataset_b)):
            for key in ("images", "labels", "path"):
                if key in spec and not self.resolve(spec[key]).exists():
                    problems.append(f"dataset file not found: {self.resolve(spec[key])}")
        if self.dataset.get("kind") == "blobs" and self.scenario != "stationary":
            problems.append("blobs datasets only support the stationary scenario")
        if self.scenario == "multitask" and self.dataset_b is None and self.scenario_params.get("single_domain") is not True:
            problems.append("multitask needs dataset_b (or params.single_domain = true)")
        if self.scenario == "stream" and self.dataset.get("kind") != "csv":
            problems.append("the stream scenario reads a labelled CSV feature file")
        if self.scenario == "negative_images" and self.dataset.get("kind") == "blobs":
            problems.append("negative images need features in [0, 1]")
        try:
            AgentConfig.from_name(self.agent.get("name", "linucb"), 1, **_agent_kwargs(self.agent))
        except InvalidArgumentError as exc:
            problems.append(str(exc))
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    @property
    def extendable(self) -> bool:
        return self.arms == "extendable" or self.scenario == "extendable"


def _agent_kwargs(spec: dict) -> dict:
    return {k: v for k, v in spec.items() if k != "name"}


@functools.lru_cache(maxsize=8)
def _load_dataset_cached(spec_json: str, base_dir: str) -> Dataset:
    spec = json.loads(spec_json)
    base = Path(base_dir)

    def res(p):
        path = Path(p)
        return path if path.is_absolute() else base / path

    kind = spec["kind"]
    limit = spec.get("limit", 5000)
    if kind == "idx":
        ds = load_idx(res(spec["images"]), res(spec["labels"]), limit=limit, name=spec.get("name", "mnist"))
    elif kind == "csv":
        ds = load_labelled_csv(res(spec["path"]), spec["label_column"], limit=limit, name=spec.get("name"))
    else:
        raise ConfigError(f"dataset kind {kind!r} is not file-backed")
    return pool_downsample(ds, spec.get("pool", 1))


def load_dataset(spec: dict, base_dir=".") -> Dataset:
    return _load_dataset_cached(json.dumps(spec, sort_keys=True), str(base_dir))


# -- building one replica -----------------------------------------------------

def build_env(config: RunConfig, master_seed: int) -> envmod.Environment:
    common = {"total_steps": config.total_steps, "batch_size": config.batch_size,
              "reveal": config.reveal, "seed": master_seed}
    params = dict(config.scenario_params)
    spec = config.dataset
    if spec["kind"] == "blobs":
        syn = envmod.SyntheticEnvConfig.separated(spec.get("classes", 3), spec.get("dimension", 20),
                                                  spec.get("separation", 10.0), spec.get("noise", 1.0))
        return envmod.build_synthetic(syn, **common)
    ds = load_dataset(spec, config.base_dir)
    name = config.scenario
    if name in ("stationary", "extendable"):
        return envmod.build_stationary(ds, **common)
    if name == "cluster_drift":
        return envmod.build_cluster_drift(ds, k=params.get("k"), concentration=params.get("concentration", 0.5), **common)
    if name == "negative_images":
        return envmod.build_negative_images(ds, p_range=params.get("p_range", (0.0, 1.0)), **common)
    if name == "shuffled_labels":
        return envmod.build_shuffled_labels(ds, force_identity=params.get("force_identity", False), **common)
    if name == "multitask":
        ds_b = None if config.dataset_b is None else load_dataset(config.dataset_b, config.base_dir)
        return envmod.build_multitask(ds, ds_b, **common)
    if name == "stream":
        common.pop("total_steps")
        return envmod.build_stream_generator(ds, segment_length_range=params.get("segment_length_range", (50, 150)),
                                             n_segments=params.get("n_segments", 100), **common)
    raise ConfigError(f"unknown scenario {name!r}")


def build_agent(config: RunConfig, environment: envmod.Environment, master_seed: int) -> Agent:
    spec = config.agent
    acfg = AgentConfig.from_name(spec.get("name", "linucb"), environment.dimension, **_agent_kwargs(spec))
    n_arms = 1 if config.extendable else environment.n_classes
    return Agent(acfg, n_arms, rng=rngmod.stream(master_seed, rngmod.TIEBREAK))


# -- metrics ----------------------------------------------------------------

@dataclass
class MetricsTrace:
    """Trace rows (step, cumulative_reward, revealed_count, accuracy, errors, arm_count)."""

    rows: list[tuple] = field(default_factory=list)
    choices: np.ndarray | None = None
    rewards: np.ndarray | None = None
    revealed: np.ndarray | None = None
    seed: int = 0
    wall_time: float = 0.0
    expected_reveal_rate: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.rows[-1][0] if self.rows else 0

    @property
    def cumulative_reward(self) -> int:
        return self.rows[-1][1] if self.rows else 0

    @property
    def final_accuracy(self) -> float:
        return self.rows[-1][3] if self.rows else 0.0

    def window_accuracy(self, last: int) -> float:
        return float(self.rewards[-last:].mean())

    def summary(self) -> dict:
        return {
            "steps": self.steps,
            "final_accuracy": self.final_accuracy,
            "final_cumulative_reward": self.cumulative_reward,
            "revealed_count": self.rows[-1][2] if self.rows else 0,
            "final_arm_count": self.rows[-1][5] if self.rows else 0,
        }


def _row(step: int, cum: int, revealed: int, arms: int) -> tuple:
    acc = cum / step if step else 0.0
    return (step, cum, revealed, acc, step - cum, arms)


def run_loop(environment: envmod.Environment, agent: Agent, extendable: bool = False,
             trace_stride: int = DEFAULT_TRACE_STRIDE) -> MetricsTrace:
    """Run the protocol until the environment is exhausted."""
    T = environment.total_steps
    choices = np.zeros(T, dtype=np.int64)
    rewards = np.zeros(T, dtype=np.int8)
    revealed_bits = np.zeros(T, dtype=bool)
    mapping: dict[int, int] | None = {} if extendable else None
    cum = revealed = 0
    rows = [_row(0, 0, 0, agent.n_arms)]
    for t in range(T):
        sample = environment.next_sample()
        decision = agent.select(sample.context)
        chosen = decision.chosen_arm
        shown = environment.reveal(sample.step)
        r = environment.reward(sample, chosen, mapping)
        fb = Feedback.of(r) if shown else HIDDEN
        if extendable:
            extendable_step(agent, sample.context, sample.true_label, chosen, fb, mapping)
        else:
            agent.observe(sample.context, chosen, fb)
        cum += r
        revealed += shown
        choices[t], rewards[t], revealed_bits[t] = chosen, r, shown
        step = t + 1
        if step % trace_stride == 0 or step == T:
            rows.append(_row(step, cum, revealed, agent.n_arms))
    diag = {"abstentions": agent.abstentions}
    if extendable:
        diag["mapping"] = {str(k): v for k, v in sorted(mapping.items())}
    return MetricsTrace(rows, choices, rewards, revealed_bits, diagnostics=diag)


def expected_reveal_stats(schedule: envmod.RevealSchedule, total_steps: int, batch_size: int) -> tuple[float, float]:
    """Mean and standard deviation of the revealed fraction over a run."""
    p = np.array([schedule.probability(t // batch_size) for t in range(total_steps)])
    return float(p.mean()), float(np.sqrt(np.sum(p * (1 - p))) / total_steps)


def check_reveal_concentration(trace: MetricsTrace, schedule: envmod.RevealSchedule, batch_size: int,
                               sigmas: float = 4.0) -> bool:
    """True when the revealed fraction lies within ``sigmas`` binomial sd of the schedule."""
    T = trace.steps
    mean, sd = expected_reveal_stats(schedule, T, batch_size)
    frac = trace.rows[-1][2] / T if T else mean
    return abs(frac - mean) <= sigmas * sd + 1e-12


def run_replica(config: RunConfig, replica: int) -> MetricsTrace:
    master = config.seed + replica
    start = time.perf_counter()
    environment = build_env(config, master)
    agent = build_agent(config, environment, master)
    trace = run_loop(environment, agent, config.extendable, config.trace_stride)
    trace.seed = master
    trace.wall_time = time.perf_counter() - start
    if trace.steps >= 1000 and not check_reveal_concentration(trace, config.reveal, config.batch_size):
        log.warning("replica %d: revealed fraction %.4f is more than 4 sd from the schedule mean",
                    replica, trace.rows[-1][2] / trace.steps)
    return trace


def _replica_job(args):
    config, replica = args
    try:
        return replica, run_replica(config, replica), None
    except BerlinError as exc:
        return replica, None, f"{type(exc).__name__}: {exc}"


def run_experiment(config: RunConfig) -> list[MetricsTrace | None]:
    """Run every replica; failed replicas come back as ``None`` and are logged.

    Traces are written to ``config.out`` when it is set.
    """
    config.validate()
    jobs = [(config, r) for r in range(config.replicas)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_replica_job, jobs))
    else:
        results = [_replica_job(j) for j in jobs]
    traces: list[MetricsTrace | None] = [None] * config.replicas
    for replica, trace, error in sorted(results, key=lambda t: t[0]):
        if error is not None:
            log.error("replica %d failed: %s", replica, error)
            continue
        traces[replica] = trace
        if config.out:
            emit_trace(trace, Path(config.out) / f"trace_r{replica}.csv", config)
    return traces


# -- output -----------------------------------------------------------------

def emit_trace(trace: MetricsTrace, path, config: RunConfig | None = None) -> None:
    """Write the trace CSV and a sibling ``.json`` summary."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for step, cum, rev, acc, err, arms in trace.rows:
                w.writerow((step, cum, rev, repr(float(acc)), err, arms))
        summary = {
            "config": None if config is None else config.to_dict(),
            "seed": trace.seed,
            **trace.summary(),
            "wall_time_seconds": trace.wall_time,
            "diagnostics": trace.diagnostics,
        }
        path.with_suffix(".json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    except OSError as exc:
        raise BerlinError(f"cannot write trace to {path}: {exc}") from exc


# -- grids ------------------------------------------------------------------

@dataclass
class GridConfig:
    base: dict
    agents: list[str]
    scenarios: list[dict]
    reveal: list
    seeds: list[int]
    arms: list[str] = field(default_factory=lambda: ["fixed"])
    workers: int = 1
    out: str | None = None
    base_dir: str = "."

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "GridConfig":
        missing = [k for k in ("base", "agents", "scenarios", "reveal", "seeds") if k not in doc]
        if missing:
            raise ConfigError(f"grid config missing {missing}")
        scenarios = [s if isinstance(s, dict) else {"name": s} for s in doc["scenarios"]]
        return cls(doc["base"], list(doc["agents"]), scenarios, list(doc["reveal"]), list(doc["seeds"]),
                   list(doc.get("arms", ["fixed"])), doc.get("workers", 1), doc.get("out"), str(base_dir))

    @classmethod
    def load(cls, path) -> "GridConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read grid config {path}: {exc}") from None
        return cls.from_dict(doc, base_dir=path.parent)


def _reveal_doc(value) -> dict:
    if isinstance(value, dict):
        return value
    if isinstance(value, (list, tuple)):
        return {"kind": "per_batch", "values": list(value)}
    return {"kind": "fixed", "p": float(value)}


def reveal_label(value) -> str:
    doc = _reveal_doc(value)
    if doc["kind"] == "fixed":
        return f"pr={doc['p']:g}"
    return "pr=" + "/".join(f"{v:g}" for v in doc["values"])


def grid_runs(grid: GridConfig) -> list[tuple[tuple, RunConfig]]:
    """Expand the grid into ``((agent, cell), RunConfig)`` pairs, one per seed."""
    runs = []
    for scen, arms, reveal, agent, seed in itertools.product(grid.scenarios, grid.arms, grid.reveal,
                                                             grid.agents, grid.seeds):
        doc = copy.deepcopy(grid.base)
        sdoc = {**doc.get("scenario", {}), **scen}
        if "params" in scen:
            sdoc["params"] = {**doc.get("scenario", {}).get("params", {}), **scen["params"]}
        doc["scenario"] = sdoc
        doc["arms"] = arms
        doc["reveal"] = _reveal_doc(reveal)
        doc["agent"] = {**doc.get("agent", {}), "name": agent}
        doc["seed"] = int(seed)
        doc["replicas"] = 1
        doc["out"] = None
        cell = f"{sdoc['name']}|{arms}|{reveal_label(reveal)}"
        runs.append(((agent, cell), RunConfig.from_dict(doc, base_dir=grid.base_dir)))
    return runs


def _grid_job(item):
    key, config = item
    try:
        config.validate()
        trace = run_replica(config, 0)
        return key, config.seed, trace.final_accuracy, None
    except BerlinError as exc:
        return key, config.seed, None, f"{type(exc).__name__}: {exc}"


def run_grid(grid: GridConfig) -> dict:
    """Run the cross product and average final accuracy per (agent, cell).

    Returns ``{"agents", "cells", "table", "runs", "failures"}``; ``table``
    maps agent -> cell -> mean accuracy, or ``None`` when any seed failed.
    """
    runs = grid_runs(grid)
    if grid.workers > 1:
        with ProcessPoolExecutor(max_workers=grid.workers) as pool:
            results = list(pool.map(_grid_job, runs))
    else:
        results = [_grid_job(r) for r in runs]
    cells = list(dict.fromkeys(key[1] for key, _ in runs))
    by_key: dict[tuple, list] = {}
    failures = []
    for key, seed, acc, error in results:
        by_key.setdefault(key, []).append(acc)
        if error is not None:
            failures.append({"agent": key[0], "cell": key[1], "seed": seed, "error": error})
    table = {a: {} for a in grid.agents}
    for (agent, cell), accs in by_key.items():
        table[agent][cell] = None if any(a is None for a in accs) else float(np.mean(accs))
    result = {"agents": list(grid.agents), "cells": cells, "table": table,
              "runs": [{"agent": k[0], "cell": k[1], "seed": s, "final_accuracy": a} for k, s, a, _ in results],
              "failures": failures}
    if grid.out:
        write_grid(result, grid.out)
    return result


def write_grid(result: dict, out) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["agent", *result["cells"]])
        for agent in result["agents"]:
            vals = [result["table"][agent].get(c) for c in result["cells"]]
            w.writerow([agent, *("" if v is None else f"{v:.4f}" for v in vals)])
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["agent", "cell", "seed", "final_accuracy"])
        for run in result["runs"]:
            acc = run["final_accuracy"]
            w.writerow([run["agent"], run["cell"], run["seed"], "" if acc is None else repr(acc)])
    if result["failures"]:
        (out / "diagnostics.json").write_text(json.dumps(result["failures"], indent=2))


def binomial_band(p: float, n: int, sigmas: float) -> tuple[float, float]:
    sd = math.sqrt(p * (1 - p) / n)
    return p - sigmas * sd, p + sigmas * sd
