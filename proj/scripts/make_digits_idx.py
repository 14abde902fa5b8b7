#!/usr/bin/env python3
"""Write the scikit-learn digits corpus as 28x28 IDX files.

The 1797 8x8 handwritten digits are upscaled with nearest-neighbor
replication (x4) and centered in a 28x28 frame, giving MNIST-shaped inputs
at desk scale without a network download. The split is a fixed seeded
shuffle: the first 1000 samples become the training pool, the rest the
held-out test set (797 samples, so test accuracy resolves 0.125-point steps).
"""
import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def write_idx(images: np.ndarray, labels: np.ndarray, img_path: Path, lbl_path: Path) -> None:
    n, h, w = images.shape
    with open(img_path, "wb") as f:
        f.write(struct.pack(">iiii", 0x803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())
    with open(lbl_path, "wb") as f:
        f.write(struct.pack(">ii", 0x801, n))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data"
    out.mkdir(parents=True, exist_ok=True)

    digits = load_digits()
    imgs8 = digits.images  # (1797, 8, 8), values 0..16
    big = np.kron(imgs8, np.ones((4, 4)))  # nearest-neighbor x4 -> 32x32
    big = big[:, 2:30, 2:30]  # center crop to 28x28
    big = np.clip(np.rint(big * 255.0 / 16.0), 0, 255).astype(np.uint8)
    labels = digits.target.astype(np.uint8)

    rng = np.random.default_rng(20240501)
    order = rng.permutation(len(labels))
    big, labels = big[order], labels[order]

    n_train = 1000
    write_idx(big[:n_train], labels[:n_train],
              out / "digits-train-images-idx3-ubyte", out / "digits-train-labels-idx1-ubyte")
    write_idx(big[n_train:], labels[n_train:],
              out / "digits-test-images-idx3-ubyte", out / "digits-test-labels-idx1-ubyte")
    print(f"wrote {n_train} train / {len(labels) - n_train} test samples to {out}")


if __name__ == "__main__":
    main()
