"""Command line interface: ``berlinucb {run,grid,validate,inspect-dataset}``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import BerlinError, ConfigError
from .harness import GridConfig, RunConfig, load_dataset, run_experiment, run_grid

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

CSV_NOTE = ("CSV datasets must be header-first with numeric, already-encoded feature columns; "
            "categorical columns are not encoded by the loader.")


def _parse_pr(text: str) -> dict:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--pr expects a number or comma list, got {text!r}") from None
    if len(values) == 1:
        return {"kind": "fixed", "p": values[0]}
    return {"kind": "per_batch", "values": values}


def _run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--agent", choices=["linucb", "berlin", "b-kmeans", "b-knn", "b-gmm"])
    p.add_argument("--scenario", choices=["stationary", "cluster_drift", "negative_images", "shuffled_labels",
                                          "multitask", "extendable", "stream"])
    p.add_argument("--arms", choices=["fixed", "extendable"])
    p.add_argument("--pr", type=_parse_pr, help="reveal probability, or a comma list cycled per batch")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--exploration", type=float)
    p.add_argument("--pool", type=int, help="average-pool factor for square image datasets")
    p.add_argument("--out", help="output directory for traces")
    p.add_argument("--replicas", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="berlinucb", description="Contextual bandits with episodic rewards.",
                                     epilog=CSV_NOTE)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one configuration", epilog=CSV_NOTE)
    _run_options(run)
    val = sub.add_parser("validate", help="check a configuration without running it")
    _run_options(val)

    grid = sub.add_parser("grid", help="run an agents x scenarios x p_r x seeds grid")
    grid.add_argument("--config", required=True, help="JSON grid configuration")
    grid.add_argument("--out")
    grid.add_argument("--workers", type=int)

    ins = sub.add_parser("inspect-dataset", help="print dataset statistics", epilog=CSV_NOTE)
    ins.add_argument("--config", help="run configuration whose dataset to inspect")
    ins.add_argument("--images")
    ins.add_argument("--labels")
    ins.add_argument("--csv")
    ins.add_argument("--label-column")
    ins.add_argument("--limit", type=int, default=5000)
    ins.add_argument("--pool", type=int, default=1)
    return parser


def apply_overrides(doc: dict, args: argparse.Namespace) -> dict:
    """Fold command-line flags into a config document; flags win."""
    doc = json.loads(json.dumps(doc))
    scen = doc.setdefault("scenario", {})
    agent = doc.setdefault("agent", {})
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.agent is not None:
        agent["name"] = args.agent
    if args.exploration is not None:
        agent["exploration"] = args.exploration
    if args.scenario is not None:
        scen["name"] = args.scenario
    if args.steps is not None:
        scen["total_steps"] = args.steps
    if args.batch_size is not None:
        scen["batch_size"] = args.batch_size
    if args.arms is not None:
        doc["arms"] = args.arms
    if args.pr is not None:
        doc["reveal"] = args.pr
    if args.pool is not None:
        doc.setdefault("dataset", {})["pool"] = args.pool
    if args.out is not None:
        doc["out"] = args.out
    if args.replicas is not None:
        doc["replicas"] = args.replicas
    return doc


def _load_run_config(args) -> RunConfig:
    path = Path(args.config)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    config = RunConfig.from_dict(apply_overrides(doc, args), base_dir=path.parent)
    if args.out is not None:
        config.out = args.out
    return config.validate()


def cmd_run(args) -> int:
    config = _load_run_config(args)
    traces = run_experiment(config)
    for r, trace in enumerate(traces):
        if trace is None:
            print(f"replica {r}: FAILED")
            continue
        print(f"replica {r} seed {trace.seed}: accuracy {trace.final_accuracy:.4f} "
              f"reward {trace.cumulative_reward}/{trace.steps} revealed {trace.rows[-1][2]} "
              f"arms {trace.rows[-1][5]} ({trace.wall_time:.1f}s)")
    return EXIT_OK if all(t is not None for t in traces) else EXIT_RUNTIME


def cmd_validate(args) -> int:
    config = _load_run_config(args)
    print(json.dumps(config.to_dict(), indent=2))
    print("config OK")
    return EXIT_OK


def cmd_grid(args) -> int:
    grid = GridConfig.load(args.config)
    if args.out is not None:
        grid.out = args.out
    if args.workers is not None:
        grid.workers = args.workers
    result = run_grid(grid)
    width = max(len(a) for a in result["agents"])
    print(" " * width, *result["cells"], sep="  ")
    for agent in result["agents"]:
        vals = [result["table"][agent].get(c) for c in result["cells"]]
        print(agent.ljust(width), *("   --   " if v is None else f"{v:.4f}".center(len(c)) for v, c in zip(vals, result["cells"])), sep="  ")
    return EXIT_RUNTIME if result["failures"] else EXIT_OK


def cmd_inspect(args) -> int:
    if args.config:
        config = RunConfig.load(args.config)
        ds = load_dataset(config.dataset, config.base_dir)
    elif args.images and args.labels:
        ds = load_dataset({"kind": "idx", "images": str(Path(args.images).resolve()),
                           "labels": str(Path(args.labels).resolve()), "limit": args.limit, "pool": args.pool})
    elif args.csv and args.label_column:
        ds = load_dataset({"kind": "csv", "path": str(Path(args.csv).resolve()), "label_column": args.label_column,
                           "limit": args.limit, "pool": args.pool})
    else:
        raise ConfigError("inspect-dataset needs --config, --images/--labels, or --csv/--label-column")
    print(json.dumps(ds.summary(), indent=2))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "grid": cmd_grid, "inspect-dataset": cmd_inspect}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BerlinError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
