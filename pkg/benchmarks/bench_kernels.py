"""Compare the numba and pure-numpy kernel backends.

Part one times each hot kernel in-process on MNIST-like contexts (sparse,
pixel-valued) at pooled and full dimension. Part two runs a short end-to-end
experiment in a subprocess per backend, selected with ``BERLINUCB_NUMBA``, and
checks that both backends make the same decisions.

    python benchmarks/bench_kernels.py [--repeat 200] [--steps 2000]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from berlinucb import _kernels_numba as knb
from berlinucb import _kernels_numpy as knp

ROOT = Path(__file__).resolve().parents[1]


def timeit(fn, repeat: int) -> float:
    fn()  # warm-up, also triggers JIT compilation
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat


def context(rng, d: int) -> np.ndarray:
    x = rng.random(d)
    x[rng.random(d) < 0.8] = 0.0  # MNIST digits are mostly background
    return x


def bench_kernels(repeat: int) -> list[tuple]:
    rng = np.random.default_rng(0)
    rows = []
    for d in (196, 784):
        K = 10
        A_inv = np.tile(np.eye(d), (K, 1, 1))
        b = rng.random((K, d))
        x = context(rng, d)
        memory = rng.random((2000, d))
        means, var = rng.random((K, d)), rng.uniform(0.1, 1.0, (K, d))
        cases = {
            "sherman_morrison_update": lambda m: m.sherman_morrison_update(A_inv[0], x * 1e-3, 1e-12),
            "rank1_update": lambda m: m.rank1_update(A_inv[1], x * 1e-3),
            "ucb_terms (10 arms)": lambda m: m.ucb_terms(A_inv, b, x),
            "sq_distances (2000 pts)": lambda m: m.sq_distances(memory, x),
            "diag_gauss_loglik": lambda m: m.diag_gauss_loglik(means, var, x),
        }
        for name, call in cases.items():
            t_np = timeit(lambda: call(knp), repeat)
            t_nb = timeit(lambda: call(knb), repeat)
            rows.append((d, name, t_np * 1e6, t_nb * 1e6, t_np / t_nb))
    return rows


END_TO_END = """
import json, sys, time
from berlinucb import kernels
from berlinucb.harness import RunConfig, run_replica
doc = json.loads(sys.argv[1])
run_replica(RunConfig.from_dict({**doc, "scenario": {"name": "stationary", "total_steps": 50}}), 0)
t = time.perf_counter()
trace = run_replica(RunConfig.from_dict(doc), 0)
print(json.dumps({"backend": kernels.BACKEND, "seconds": time.perf_counter() - t,
                  "choices": trace.choices.tolist()}))
"""


def bench_end_to_end(steps: int, agent: str, pool: int) -> list[dict]:
    doc = {
        "dataset": {"kind": "idx", "images": str(ROOT / "data/mnist5k/images-idx3-ubyte.gz"),
                    "labels": str(ROOT / "data/mnist5k/labels-idx1-ubyte.gz"), "pool": pool},
        "scenario": {"name": "stationary", "total_steps": steps},
        "reveal": {"kind": "fixed", "p": 0.1},
        "agent": {"name": agent},
    }
    results = []
    for flag in ("1", "0"):
        env = {**os.environ, "BERLINUCB_NUMBA": flag}
        out = subprocess.run([sys.executable, "-c", END_TO_END, json.dumps(doc)], env=env,
                             capture_output=True, text=True, check=True)
        results.append(json.loads(out.stdout))
    return results


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--agent", default="b-knn")
    parser.add_argument("--pool", type=int, default=1)
    args = parser.parse_args(argv)

    print(f"{'d':>4}  {'kernel':<26}{'numpy us':>10}{'numba us':>10}{'speedup':>9}")
    for d, name, t_np, t_nb, ratio in bench_kernels(args.repeat):
        print(f"{d:>4}  {name:<26}{t_np:>10.1f}{t_nb:>10.1f}{ratio:>8.1f}x")

    res = bench_end_to_end(args.steps, args.agent, args.pool)
    print(f"\nend to end: {args.agent}, MNIST pool {args.pool}, {args.steps} steps, p_r=0.1")
    for r in res:
        print(f"  {r['backend']:<6} {r['seconds']:.2f}s")
    print(f"  speedup {res[1]['seconds'] / res[0]['seconds']:.1f}x, "
          f"identical decisions: {res[0]['choices'] == res[1]['choices']}")


if __name__ == "__main__":
    main()
