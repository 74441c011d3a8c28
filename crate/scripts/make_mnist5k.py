"""Build the bundled 5000-sample MNIST subset as gzipped IDX files.

Source: the `mnist_5k.csv.gz` table shipped inside the mlxtend wheel
(5000 images from the MNIST training set, 784 pixel columns + label).

    pip download --no-deps mlxtend
    python3 scripts/make_mnist5k.py mlxtend-*.whl data/mnist5k
"""
import gzip
import struct
import sys
import zipfile


def main(wheel, out_dir):
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    rows = [line.split(",") for line in raw.strip().split("\n")]
    images = bytearray()
    labels = bytearray()
    for r in rows:
        images.extend(int(float(v)) for v in r[:784])
        labels.append(int(float(r[784])))
    n = len(rows)
    img = struct.pack(">IIII", 0x00000803, n, 28, 28) + bytes(images)
    lab = struct.pack(">II", 0x00000801, n) + bytes(labels)
    with gzip.GzipFile(f"{out_dir}/images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(img)
    with gzip.GzipFile(f"{out_dir}/labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(lab)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
