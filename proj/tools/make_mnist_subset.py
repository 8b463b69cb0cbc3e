#!/usr/bin/env python3
"""Write the digit 3/5 slice of mlxtend's bundled 5k MNIST sample as IDX files.

mlxtend ships `mnist_5k.csv.gz` (500 images per digit, 28x28, label in the
last column). Only the wheel is needed; the package does not have to be
installed:

    pip download --no-deps -d /tmp/wheels mlxtend
    python3 tools/make_mnist_subset.py /tmp/wheels/mlxtend-*.whl data/mnist_3_5
"""
import argparse
import gzip
import pathlib
import struct
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("wheel")
    ap.add_argument("out_dir")
    ap.add_argument("--digits", default="3,5")
    args = ap.parse_args()

    keep = {int(d) for d in args.digits.split(",")}
    with zipfile.ZipFile(args.wheel) as z:
        rows = gzip.decompress(z.read(MEMBER)).decode().splitlines()

    images, labels = [], []
    for row in rows:
        values = [int(v) for v in row.split(",")]
        if values[-1] in keep:
            images.append(bytes(values[:-1]))
            labels.append(values[-1])

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(img)
    with open(out / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {len(images)} images to {out}")


if __name__ == "__main__":
    main()
