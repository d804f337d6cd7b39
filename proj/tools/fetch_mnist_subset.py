#!/usr/bin/env python3
"""Build a desk-scale MNIST subset in IDX format.

The full MNIST archives are not always reachable from build sandboxes, but the
npm package `mnist` redistributes roughly 10,000 real MNIST digits as JSON
intensity arrays. This script fetches that package through npm, shuffles the
digits with a fixed seed and writes the standard four IDX files:

    train-images-idx3-ubyte / train-labels-idx1-ubyte   (first --train-count)
    t10k-images-idx3-ubyte  / t10k-labels-idx1-ubyte    (the remainder)

Running it again is a no-op once all four files exist.
"""

import argparse
import json
import os
import random
import struct
import subprocess
import sys
import tarfile
import tempfile

NAMES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def fetch_digits(workdir):
    subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=workdir,
                   check=True, stdout=subprocess.DEVNULL)
    tgz = [n for n in os.listdir(workdir) if n.endswith(".tgz")][0]
    with tarfile.open(os.path.join(workdir, tgz)) as tar:
        tar.extractall(workdir)
    items = []
    for digit in range(10):
        with open(os.path.join(workdir, "package", "src", "digits", f"{digit}.json")) as f:
            raw = json.load(f)["data"]
        for k in range(len(raw) // 784):
            pix = [min(255, max(0, round(v * 255))) for v in raw[k * 784:(k + 1) * 784]]
            items.append((pix, digit))
    return items


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True)
    parser.add_argument("--train-count", type=int, default=6000)
    parser.add_argument("--seed", type=int, default=20170116)
    args = parser.parse_args()

    if all(os.path.exists(os.path.join(args.out, n)) for n in NAMES):
        print(f"MNIST subset already present in {args.out}")
        return 0

    os.makedirs(args.out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        items = fetch_digits(tmp)
    random.Random(args.seed).shuffle(items)
    train, test = items[:args.train_count], items[args.train_count:]
    write_images(os.path.join(args.out, NAMES[0]), [p for p, _ in train])
    write_labels(os.path.join(args.out, NAMES[1]), [l for _, l in train])
    write_images(os.path.join(args.out, NAMES[2]), [p for p, _ in test])
    write_labels(os.path.join(args.out, NAMES[3]), [l for _, l in test])
    print(f"wrote {len(train)} train and {len(test)} test digits to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
