#!/usr/bin/env python3
"""Builds a small offline stand-in digit dataset in IDX format.

Uses scikit-learn's bundled 8x8 handwritten-digit images (1797 samples,
pixel values 0..16) upscaled to 0..255 bytes, split into train/test IDX
pairs with the same file names the loaders expect. Useful for exercising
the full IDX -> sequence -> training pipeline on machines without network
access to the real MNIST files.
"""
import argparse
import pathlib
import struct

import numpy as np
from sklearn.datasets import load_digits


def write_idx(images: np.ndarray, labels: np.ndarray, img_path, lbl_path):
    n, rows, cols = images.shape
    with open(img_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())
    with open(lbl_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/digits", help="output directory")
    ap.add_argument("--test-size", type=int, default=360)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ds = load_digits()
    images = (ds.images * (255.0 / 16.0)).round().astype(np.uint8)  # (1797, 8, 8)
    labels = ds.target.astype(np.uint8)
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(images))
    images, labels = images[order], labels[order]

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_test = args.test_size
    write_idx(images[n_test:], labels[n_test:],
              out / "train-images-idx3-ubyte", out / "train-labels-idx1-ubyte")
    write_idx(images[:n_test], labels[:n_test],
              out / "t10k-images-idx3-ubyte", out / "t10k-labels-idx1-ubyte")
    print(f"wrote {len(images) - n_test} train / {n_test} test samples to {out}")


if __name__ == "__main__":
    main()
