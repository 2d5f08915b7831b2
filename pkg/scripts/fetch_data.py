#!/usr/bin/env python3
"""Download the benchmark datasets into the layout the loaders expect.

Needs a network connection; run on any machine, then point --data-dir
(or $ANALOGNN_DATA) at the output directory. Files already present are
kept, so reruns only fetch what is missing.

Layout produced:

    data/mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte.gz
    data/fashion_mnist/...same names...
    data/cifar10/data_batch_{1..5}.bin, test_batch.bin
"""

from __future__ import annotations

import argparse
import io
import sys
import tarfile
import urllib.error
import urllib.request
from pathlib import Path

IDX_FILES = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
]

# first URL that answers wins
MIRRORS = {
    "mnist": [
        "https://ossci-datasets.s3.amazonaws.com/mnist/",
        "https://storage.googleapis.com/cvdf-datasets/mnist/",
    ],
    "fashion_mnist": [
        "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
    ],
}
CIFAR_URL = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"
CIFAR_MEMBERS = [f"data_batch_{i}.bin" for i in range(1, 6)] + ["test_batch.bin"]


def download(url: str, dest: Path) -> None:
    print(f"  {url}")
    req = urllib.request.Request(url, headers={"User-Agent": "analognn-fetch/1"})
    with urllib.request.urlopen(req, timeout=120) as resp:
        dest.write_bytes(resp.read())


def fetch_idx(name: str, root: Path) -> None:
    base = root / name
    base.mkdir(parents=True, exist_ok=True)
    for fname in IDX_FILES:
        dest = base / fname
        if dest.exists() or dest.with_suffix("").exists():
            print(f"  {dest.name}: already present")
            continue
        last_err = None
        for mirror in MIRRORS[name]:
            try:
                download(mirror + fname, dest)
                break
            except (urllib.error.URLError, OSError) as e:
                last_err = e
        else:
            raise SystemExit(f"could not fetch {fname} for {name}: {last_err}")


def fetch_cifar(root: Path) -> None:
    base = root / "cifar10"
    base.mkdir(parents=True, exist_ok=True)
    if all((base / m).exists() for m in CIFAR_MEMBERS):
        print("  cifar10 binaries: already present")
        return
    print(f"  {CIFAR_URL} (~162MB)")
    req = urllib.request.Request(CIFAR_URL, headers={"User-Agent": "analognn-fetch/1"})
    with urllib.request.urlopen(req, timeout=600) as resp:
        blob = resp.read()
    with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as tar:
        for member in tar.getmembers():
            stem = Path(member.name).name
            if stem in CIFAR_MEMBERS:
                payload = tar.extractfile(member).read()
                (base / stem).write_bytes(payload)
                print(f"  extracted {stem} ({len(payload):,} bytes)")


def verify(names: list[str], root: Path) -> None:
    try:
        from analognn.data import load_dataset
    except ImportError:
        print("analognn not installed; skipping the load check")
        return
    for name in names:
        for train in (True, False):
            ds = load_dataset(name, root, train=train)
            part = "train" if train else "test"
            print(f"  {name} {part}: {ds.n} images {ds.image_shape}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("datasets", nargs="*",
                        default=["mnist", "fashion_mnist", "cifar10"],
                        choices=["mnist", "fashion_mnist", "cifar10"],
                        help="which datasets to fetch (default: all)")
    parser.add_argument("--data-dir", default="data", help="output root (default: data)")
    args = parser.parse_args()
    root = Path(args.data_dir)
    names = list(dict.fromkeys(args.datasets))  # dedupe, keep order

    for name in names:
        print(f"{name}:")
        if name == "cifar10":
            fetch_cifar(root)
        else:
            fetch_idx(name, root)

    print("verifying:")
    verify(names, root)
    print(f"done; pass --data-dir {root} (or set ANALOGNN_DATA={root}) to use")
    return 0


if __name__ == "__main__":
    sys.exit(main())
