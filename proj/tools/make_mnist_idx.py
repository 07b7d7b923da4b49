#!/usr/bin/env python3
"""Build IDX files from the 10,000-digit MNIST subset shipped in the `mnist` npm package.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_idx.py package/src/digits data/

Writes train (first 8,500 after a fixed shuffle) and held-out (last 1,500)
image/label files in the standard IDX layout.
"""
import json
import random
import struct
import sys
from pathlib import Path

N_TRAIN = 8500


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    samples = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        for i in range(0, len(flat), 784):
            pixels = [min(255, max(0, round(v * 255))) for v in flat[i:i + 784]]
            samples.append((pixels, digit))
    random.Random(20240601).shuffle(samples)
    train, test = samples[:N_TRAIN], samples[N_TRAIN:]
    write_images(out / "train-images-idx3-ubyte", [s[0] for s in train])
    write_labels(out / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_images(out / "heldout-images-idx3-ubyte", [s[0] for s in test])
    write_labels(out / "heldout-labels-idx1-ubyte", [s[1] for s in test])
    print(f"train={len(train)} heldout={len(test)}")


if __name__ == "__main__":
    main()
