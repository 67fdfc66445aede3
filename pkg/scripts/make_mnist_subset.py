"""Write the desk-scale MNIST split as IDX files.

Source: the 5000-digit MNIST sample bundled with ``mlxtend`` (500 per class).
A fixed permutation splits it into 2000 training and 500 test digits.

    python scripts/make_mnist_subset.py OUT_DIR
"""

import sys
from pathlib import Path

import numpy as np

N_TRAIN = 2000
N_TEST = 500
SPLIT_SEED = 0


def write_subset(out_dir) -> dict:
    from mlxtend.data import mnist_data

    from spikegibbs.data_io import serialize_idx_images, serialize_idx_labels

    X, y = mnist_data()
    images = X.reshape(-1, 28, 28).astype(np.uint8)
    order = np.random.default_rng(SPLIT_SEED).permutation(len(y))
    parts = {"train": order[:N_TRAIN], "test": order[N_TRAIN:N_TRAIN + N_TEST]}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, idx in parts.items():
        img = out / f"{name}-images-idx3-ubyte"
        lab = out / f"{name}-labels-idx1-ubyte"
        img.write_bytes(serialize_idx_images(images[idx]))
        lab.write_bytes(serialize_idx_labels(y[idx]))
        paths[name] = (img, lab)
    return paths


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    for name, (img, lab) in write_subset(sys.argv[1]).items():
        print(f"{name}: {img} {lab}")
