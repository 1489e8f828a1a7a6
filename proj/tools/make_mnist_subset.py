#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits bundled in the npm `mnist` package to IDX.

Usage:
    npm pack mnist                      # fetches mnist-1.1.0.tgz
    tools/make_mnist_subset.py mnist-1.1.0.tgz data/mnist-10k

The package stores each digit class as a flat JSON array of grey levels in
[0, 1] (k/255). Samples are written class by class, in package order.
"""

import json
import struct
import sys
import tarfile
from pathlib import Path

ROWS = COLS = 28
PIXELS = ROWS * COLS


def read_digit_arrays(source: Path):
    if source.is_dir():
        for digit in range(10):
            path = source / "src" / "digits" / f"{digit}.json"
            yield digit, json.loads(path.read_text())["data"]
        return
    with tarfile.open(source) as tar:
        for digit in range(10):
            member = tar.extractfile(f"package/src/digits/{digit}.json")
            yield digit, json.loads(member.read())["data"]


def main(argv):
    if len(argv) != 3:
        print(__doc__, file=sys.stderr)
        return 1
    source, out_dir = Path(argv[1]), Path(argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)

    pixels = bytearray()
    labels = bytearray()
    for digit, values in read_digit_arrays(source):
        if len(values) % PIXELS != 0:
            raise SystemExit(f"digit {digit}: {len(values)} values is not a multiple of {PIXELS}")
        for v in values:
            level = round(float(v) * 255.0)
            if not 0 <= level <= 255:
                raise SystemExit(f"digit {digit}: grey level {v} out of range")
            pixels.append(level)
        labels.extend([digit] * (len(values) // PIXELS))

    count = len(labels)
    with open(out_dir / "train-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, count, ROWS, COLS))
        f.write(pixels)
    with open(out_dir / "train-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, count))
        f.write(labels)
    print(f"wrote {count} samples to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
