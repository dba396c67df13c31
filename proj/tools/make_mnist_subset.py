#!/usr/bin/env python3
"""Build IDX files for a 10,000-digit MNIST subset.

Source: the digit JSON files bundled in the npm package `mnist`
(https://www.npmjs.com/package/mnist, src/digits/<d>.json). Pixel values are
stored there as value/255 rounded to three decimals, which maps back to the
original bytes exactly.

The 10,000 digits are shuffled with a fixed seed and split into 8,000
training and 2,000 test images.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist10k
"""
import json
import pathlib
import random
import struct
import sys


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main(src, dst):
    src, dst = pathlib.Path(src), pathlib.Path(dst)
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for k in range(len(data) // 784):
            px = [int(round(v * 255)) for v in data[k * 784:(k + 1) * 784]]
            assert all(0 <= p <= 255 for p in px)
            samples.append((px, digit))
    random.Random(20240601).shuffle(samples)
    train, test = samples[:8000], samples[8000:]
    dst.mkdir(parents=True, exist_ok=True)
    write_idx_images(dst / "train-images-idx3-ubyte", [s[0] for s in train])
    write_idx_labels(dst / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_idx_images(dst / "t10k-images-idx3-ubyte", [s[0] for s in test])
    write_idx_labels(dst / "t10k-labels-idx1-ubyte", [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test images to {dst}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
