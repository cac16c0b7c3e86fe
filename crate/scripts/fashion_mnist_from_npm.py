#!/usr/bin/env python3
"""Rebuild Fashion-MNIST IDX files from the per-class JSON dump shipped in the
`fashion-mnist` npm package (package/src/clothes/<label>.json).

The package stores the 70k images grouped by class without the original
train/test split. This script takes the first 6000 images of every class as
the training split and the next 1000 as the test split, interleaving classes
round-robin so any prefix of the training file is class balanced.

usage: fashion_mnist_from_npm.py <package-dir> <out-dir>
"""
import json
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 6000
TEST_PER_CLASS = 1000


def write_idx(out: Path, stem: str, images, labels):
    with open(out / f"{stem}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(out / f"{stem}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    pkg, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    classes = []
    for label in range(10):
        data = json.loads((pkg / "src" / "clothes" / f"{label}.json").read_text())["data"]
        # the dump contains a few empty placeholder records
        data = [img for img in data if len(img) == 784]
        assert len(data) >= TRAIN_PER_CLASS + TEST_PER_CLASS
        classes.append(data)

    for stem, lo, hi in (("train", 0, TRAIN_PER_CLASS),
                         ("t10k", TRAIN_PER_CLASS, TRAIN_PER_CLASS + TEST_PER_CLASS)):
        images, labels = [], []
        for i in range(lo, hi):
            for label in range(10):
                images.append(classes[label][i])
                labels.append(label)
        write_idx(out, stem, images, labels)
        print(f"{stem}: {len(labels)} samples")


if __name__ == "__main__":
    main()
