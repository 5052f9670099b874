#!/usr/bin/env python3
"""Materialize a desk-scale MNIST subset as IDX files under data/mnist/.

Pulls the 10,000 handwritten-digit images bundled with the npm ``mnist``
package (values are pixel/255 rounded to three decimals, which recovers the
original bytes exactly), restores the uint8 pixels, shuffles them with a fixed
seed, and writes a stratified 8,000/2,000 train/test split in the standard
big-endian IDX layout:

    data/mnist/train-images-idx3-ubyte   data/mnist/train-labels-idx1-ubyte
    data/mnist/t10k-images-idx3-ubyte    data/mnist/t10k-labels-idx1-ubyte

Already-downloaded full MNIST files can simply be dropped into data/mnist/
under the same names; nothing here is specific to the subset size.

Usage: python scripts/fetch_mnist.py [--out data/mnist] [--test-fraction 0.2]
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import tarfile
import tempfile
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from sae.data import write_idx_images, write_idx_labels  # noqa: E402

SPLIT_SEED = 20240601
FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
         "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


def npm_digit_arrays(workdir: Path) -> tuple[np.ndarray, np.ndarray]:
    """Download the npm mnist tarball and restore (images u8 (n,28,28), labels)."""
    subprocess.run(["npm", "pack", "mnist", "--pack-destination", str(workdir)],
                   check=True, capture_output=True)
    tarball = next(workdir.glob("mnist-*.tgz"))
    with tarfile.open(tarball) as tf:
        tf.extractall(workdir, filter="data")
    digits_dir = workdir / "package" / "src" / "digits"

    images, labels = [], []
    for digit in range(10):
        values = json.loads((digits_dir / f"{digit}.json").read_text())["data"]
        arr = np.asarray(values, dtype=np.float64).reshape(-1, 28, 28)
        images.append(np.rint(arr * 255.0).astype(np.uint8))
        labels.append(np.full(arr.shape[0], digit, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def stratified_split(labels: np.ndarray, test_fraction: float, seed: int):
    rng = np.random.default_rng(seed)
    test_mask = np.zeros(len(labels), dtype=bool)
    for digit in np.unique(labels):
        ids = np.flatnonzero(labels == digit)
        n_test = int(round(len(ids) * test_fraction))
        test_mask[rng.choice(ids, size=n_test, replace=False)] = True
    return np.flatnonzero(~test_mask), np.flatnonzero(test_mask)


def fetch(out_dir: Path, test_fraction: float = 0.2) -> dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {name: out_dir / name for name in FILES}
    if all(p.exists() for p in paths.values()):
        return paths

    with tempfile.TemporaryDirectory() as tmp:
        images, labels = npm_digit_arrays(Path(tmp))

    order = np.random.default_rng(SPLIT_SEED).permutation(len(labels))
    images, labels = images[order], labels[order]
    train_ids, test_ids = stratified_split(labels, test_fraction, SPLIT_SEED + 1)

    write_idx_images(paths["train-images-idx3-ubyte"], images[train_ids])
    write_idx_labels(paths["train-labels-idx1-ubyte"], labels[train_ids])
    write_idx_images(paths["t10k-images-idx3-ubyte"], images[test_ids])
    write_idx_labels(paths["t10k-labels-idx1-ubyte"], labels[test_ids])
    return paths


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data" / "mnist"))
    ap.add_argument("--test-fraction", type=float, default=0.2)
    args = ap.parse_args()
    paths = fetch(Path(args.out), args.test_fraction)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
