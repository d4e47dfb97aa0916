"""Rebuild data/mnist5k/ from the 5,000-image MNIST subset shipped with mlxtend.

The mlxtend subset (500 images per digit) is stored sorted by class. It is
shuffled once with a fixed seed so a sequential stream mixes digits, then
written as gzip-compressed IDX files.

    pip download mlxtend --no-deps -d /tmp/mlx
    python scripts/make_mnist5k.py /tmp/mlx/mlxtend-*.whl
"""

from __future__ import annotations

import gzip
import io
import sys
import zipfile
from pathlib import Path

import numpy as np

from berlinucb.data import idx_bytes

SHUFFLE_SEED = 20200101
MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main(wheel: str, out: str = "data/mnist5k") -> None:
    raw = gzip.decompress(zipfile.ZipFile(wheel).read(MEMBER))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",")
    pixels = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)
    order = np.random.default_rng(SHUFFLE_SEED).permutation(labels.size)
    dest = Path(out)
    dest.mkdir(parents=True, exist_ok=True)
    for fname, arr in (("images-idx3-ubyte.gz", pixels[order]), ("labels-idx1-ubyte.gz", labels[order])):
        with gzip.GzipFile(dest / fname, "wb", mtime=0) as fh:
            fh.write(idx_bytes(arr))
    print(f"wrote {labels.size} samples to {dest}")


if __name__ == "__main__":
    main(*sys.argv[1:])
