#!/usr/bin/env python3
"""Convert the digit bundle shipped in the npm `mnist` package into IDX files.

The npm package (https://www.npmjs.com/package/mnist) carries ~10k MNIST
digits as JSON arrays of pixel intensities in [0, 1]. This script shuffles
them with a fixed seed and writes a train/test pair of gzipped IDX files
that `hyperstab train` reads like the official distribution.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_from_npm.py package/src/digits data/mnist
"""

import argparse
import gzip
import json
import pathlib
import random
import struct


def write_idx_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("digits_dir", type=pathlib.Path)
    parser.add_argument("out_dir", type=pathlib.Path)
    parser.add_argument("--test-count", type=int, default=2001)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    samples = []
    for digit in range(10):
        flat = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for i in range(len(flat) // 784):
            pixels = [min(255, max(0, round(v * 255))) for v in flat[i * 784:(i + 1) * 784]]
            samples.append((pixels, digit))

    random.Random(args.seed).shuffle(samples)
    test, train = samples[:args.test_count], samples[args.test_count:]

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for prefix, split in (("train", train), ("t10k", test)):
        write_idx_images(args.out_dir / f"{prefix}-images-idx3-ubyte.gz", [s[0] for s in split])
        write_idx_labels(args.out_dir / f"{prefix}-labels-idx1-ubyte.gz", [s[1] for s in split])
        print(f"{prefix}: {len(split)} examples")


if __name__ == "__main__":
    main()
