#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into IDX files.

The package ships 10,000 MNIST digits as JSON arrays of 784 floats in [0, 1]
(rounded to three decimals), one file per digit class. This script shuffles
them with a fixed seed and writes train/test IDX files in the standard
layout so the regular loader can read them:

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    tools/npm_mnist_to_idx.py package/src/digits OUT_DIR --train 8000 --test 2000
"""
import argparse
import json
import os
import random
import struct


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--train", type=int, default=8000)
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=20210101)
    args = ap.parse_args()

    records = []
    for d in range(10):
        with open(os.path.join(args.digits_dir, f"{d}.json")) as f:
            data = json.load(f)["data"]
        for i in range(0, len(data), 784):
            px = [max(0, min(255, int(round(v * 255)))) for v in data[i:i + 784]]
            if len(px) == 784:
                records.append((px, d))
    random.Random(args.seed).shuffle(records)
    if args.train + args.test > len(records):
        raise SystemExit(f"only {len(records)} digits available")
    train = records[:args.train]
    test = records[args.train:args.train + args.test]
    os.makedirs(args.out_dir, exist_ok=True)
    write_idx_images(os.path.join(args.out_dir, "train-images-idx3-ubyte"), [r[0] for r in train])
    write_idx_labels(os.path.join(args.out_dir, "train-labels-idx1-ubyte"), [r[1] for r in train])
    write_idx_images(os.path.join(args.out_dir, "t10k-images-idx3-ubyte"), [r[0] for r in test])
    write_idx_labels(os.path.join(args.out_dir, "t10k-labels-idx1-ubyte"), [r[1] for r in test])
    print(f"wrote {len(train)} train / {len(test)} test digits to {args.out_dir}")


if __name__ == "__main__":
    main()
