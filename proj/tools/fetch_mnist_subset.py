#!/usr/bin/env python3
# Copyright 2026 The Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Writes the 5,000-image MNIST subset shipped with mlxtend as IDX files.

Output: <out>/mnist/train-images-idx3-ubyte, train-labels-idx1-ubyte and a
SHA256SUMS file. The wheel is fetched with pip unless --wheel is given.
"""

import argparse
import glob
import gzip
import hashlib
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

CSV_IN_WHEEL = "mlxtend/data/data/mnist_5k.csv.gz"


def find_wheel(explicit):
    if explicit:
        return explicit
    tmp = tempfile.mkdtemp(prefix="mlxtend-")
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "mlxtend==0.24.0",
                    "-d", tmp], check=True)
    return glob.glob(os.path.join(tmp, "mlxtend-*.whl"))[0]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data", help="dataset root (default: data)")
    parser.add_argument("--wheel", help="path to an mlxtend wheel")
    args = parser.parse_args()

    with zipfile.ZipFile(find_wheel(args.wheel)) as z:
        text = gzip.decompress(z.read(CSV_IN_WHEEL)).decode("ascii")
    rows = [line.split(",") for line in text.splitlines() if line]
    images = bytearray()
    labels = bytearray()
    for row in rows:
        if len(row) != 785:
            sys.exit("unexpected row width %d" % len(row))
        images.extend(int(float(v)) for v in row[:784])
        labels.append(int(float(row[784])))

    target = os.path.join(args.out, "mnist")
    os.makedirs(target, exist_ok=True)
    files = {
        "train-images-idx3-ubyte": struct.pack(">IIII", 0x803, len(rows), 28, 28) + bytes(images),
        "train-labels-idx1-ubyte": struct.pack(">II", 0x801, len(rows)) + bytes(labels),
    }
    sums = []
    for name, payload in files.items():
        with open(os.path.join(target, name), "wb") as f:
            f.write(payload)
        sums.append("%s  %s\n" % (hashlib.sha256(payload).hexdigest(), name))
    with open(os.path.join(target, "SHA256SUMS"), "w") as f:
        f.writelines(sums)
    print("wrote %d images to %s" % (len(rows), target))


if __name__ == "__main__":
    main()
