from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from berlinucb.data import Dataset, load_idx, pool_downsample

ROOT = Path(__file__).resolve().parents[1]
MNIST_DIR = ROOT / "data" / "mnist5k"
MNIST_IMAGES = MNIST_DIR / "images-idx3-ubyte.gz"
MNIST_LABELS = MNIST_DIR / "labels-idx1-ubyte.gz"


@pytest.fixture(scope="session")
def mnist_pooled() -> Dataset:
    return pool_downsample(load_idx(MNIST_IMAGES, MNIST_LABELS, limit=5000), 2)


@pytest.fixture
def toy_dataset() -> Dataset:
    """Ten samples in [0, 1]^4, labels 0..4 twice."""
    rng = np.random.default_rng(3)
    feats = rng.random((10, 4))
    return Dataset(feats, np.arange(10) % 5, 5, name="toy")


def pytest_configure(config):
    config._acceptance_lines = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        for line in lines[key]:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log(request):
    """Collects ``(criterion, ok, detail)`` records for the end-of-run summary."""
    store = request.config._acceptance_lines

    def record(criterion: int, part: str, ok: bool, detail: str) -> None:
        line = f"criterion {criterion:>2} [{part}]: {'PASS' if ok else 'FAIL'}  {detail}"
        store.setdefault(criterion, []).append(line)
        print(line)

    return record
