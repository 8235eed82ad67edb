"""Download MNIST, SVHN and USPS with torchvision and write them as IDX files.

Layout: <root>/<name>/<split>/{images,labels}.idx with names mt, svhn, up.
Synthetic Digits (syn) and MNIST-M (mm) are not on torchvision; convert them
with `write_split` from whatever copy you have.

    python scripts/fetch_digits.py --root data
"""

import argparse
import struct
from pathlib import Path

import numpy as np


def write_idx(path: Path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(struct.pack(">BBBB", 0, 0, 0x08, array.ndim))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(array.tobytes())


def write_split(root: Path, name: str, split: str, images: np.ndarray, labels: np.ndarray) -> None:
    """`images` is [N, H, W] or [N, H, W, 3] uint8, `labels` is [N] in 0..9."""
    write_idx(root / name / split / "images.idx", images)
    write_idx(root / name / split / "labels.idx", labels)
    print(f"{name}/{split}: {len(labels)} samples, image shape {images.shape[1:]}")


def main() -> None:
    from torchvision import datasets

    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--root", type=Path, default=Path("data"))
    ap.add_argument("--cache", type=Path, default=Path("data/.download"))
    args = ap.parse_args()

    for split in ("train", "test"):
        train = split == "train"
        mt = datasets.MNIST(args.cache, train=train, download=True)
        write_split(args.root, "mt", split, mt.data.numpy(), mt.targets.numpy())

        svhn = datasets.SVHN(args.cache, split=split, download=True)
        # SVHN ships as [N, 3, H, W] with digit 0 stored as label 10 in some copies
        write_split(args.root, "svhn", split, svhn.data.transpose(0, 2, 3, 1), np.asarray(svhn.labels) % 10)

        up = datasets.USPS(args.cache, train=train, download=True)
        write_split(args.root, "up", split, np.asarray(up.data), np.asarray(up.targets))


if __name__ == "__main__":
    main()
