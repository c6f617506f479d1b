#!/usr/bin/env python3
"""Convert CalTech101 Silhouettes (28x28 split 1, .mat) to an IBMP file.

    python3 scripts/silhouettes_to_ibmp.py caltech101_silhouettes_28_split1.mat silhouettes.ibmp

The .mat holds {train,val,test}_data (N x 784, 0/1) and 1-based
{train,val,test}_labels. Images are stored column by column; they are
written row by row unless --keep-order is given. Labels become 0-based.
"""
import argparse
import struct

import numpy as np
from scipy.io import loadmat

MAGIC = b"IBMP"
VERSION = 1
SIDE = 28


def split(mat, name, keep_order):
    data = np.asarray(mat[f"{name}_data"], dtype=np.uint8)
    labels = np.asarray(mat[f"{name}_labels"]).reshape(-1).astype(np.int64) - 1
    if not keep_order:
        data = data.reshape(-1, SIDE, SIDE).transpose(0, 2, 1).reshape(-1, SIDE * SIDE)
    if data.shape[1] != SIDE * SIDE or data.max() > 1:
        raise SystemExit(f"{name}: expected binary N x {SIDE * SIDE} data")
    if labels.min() < 0 or len(labels) != len(data):
        raise SystemExit(f"{name}: bad labels")
    return data, labels


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("mat")
    ap.add_argument("output")
    ap.add_argument("--keep-order", action="store_true", help="do not transpose images")
    args = ap.parse_args()

    mat = loadmat(args.mat)
    parts = [split(mat, name, args.keep_order) for name in ("train", "val", "test")]
    num_classes = int(max(labels.max() for _, labels in parts)) + 1
    with open(args.output, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<4I", VERSION, SIDE * SIDE, num_classes, len(parts[0][0])))
        f.write(struct.pack("<2I", len(parts[1][0]), len(parts[2][0])))
        for _, labels in parts:
            f.write(labels.astype("<u2").tobytes())
        for data, _ in parts:
            f.write(np.packbits(data, axis=1, bitorder="little").tobytes())
    print(f"wrote {args.output}: " + ", ".join(str(len(d)) for d, _ in parts) +
          f" examples, C={num_classes}")


if __name__ == "__main__":
    main()
