#!/usr/bin/env python3
"""Build a small class-balanced MNIST subset in gzipped IDX format.

Source: the 5,000-digit MNIST sample bundled with the `mlxtend` wheel
(500 digits per class, 28x28 grayscale, label in the last CSV column).

    pip download --no-deps mlxtend -d /tmp/mlx
    python3 scripts/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl tests/data/mnist_subset

Writes {train,test}-{images-idx3,labels-idx1}-ubyte.gz, each split holding
`--per-class` digits per class in a seeded interleaved order.
"""
import argparse
import gzip
import io
import pathlib
import struct
import zipfile

import numpy as np


def load_mlxtend_csv(wheel):
    with zipfile.ZipFile(wheel) as z:
        raw = z.read("mlxtend/data/data/mnist_5k.csv.gz")
    data = np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",")
    return data[:, :-1].astype(np.uint8), data[:, -1].astype(np.uint8)


def write_idx(path, magic, array):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in array.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + array.tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("wheel")
    ap.add_argument("outdir")
    ap.add_argument("--per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=20170101)
    args = ap.parse_args()

    images, labels = load_mlxtend_csv(args.wheel)
    rng = np.random.default_rng(args.seed)
    out = pathlib.Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    train_idx, test_idx = [], []
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        train_idx.extend(idx[: args.per_class])
        test_idx.extend(idx[args.per_class : 2 * args.per_class])
    for name, idx in (("train", train_idx), ("test", test_idx)):
        idx = np.array(idx)
        rng.shuffle(idx)
        write_idx(out / f"{name}-images-idx3-ubyte.gz", 0x803, images[idx].reshape(-1, 28, 28))
        write_idx(out / f"{name}-labels-idx1-ubyte.gz", 0x801, labels[idx])


if __name__ == "__main__":
    main()
