"""Shared fixtures: synthetic datasets and real-data gating.

Real-dataset tests look under $ANALOGNN_DATA (default: <repo>/data) and
skip with an explicit reason when the files are absent, since this
environment cannot download them. Everything else runs on synthetic
data generated here.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from analognn import Dataset, write_idx
from analognn.data import dataset_paths
from analognn.rng import RngStream

REPO_ROOT = Path(__file__).resolve().parent.parent


def data_root() -> Path:
    env = os.environ.get("ANALOGNN_DATA")
    return Path(env) if env else REPO_ROOT / "data"


def have_dataset(name: str) -> bool:
    try:
        dataset_paths(name, data_root(), train=True)
        dataset_paths(name, data_root(), train=False)
    except (FileNotFoundError, ValueError):
        return False
    return True


def requires_data(*names: str):
    missing = [n for n in names if not have_dataset(n)]
    return pytest.mark.skipif(
        bool(missing),
        reason=(f"dataset files missing: {', '.join(missing)} (not downloadable "
                f"in this sandbox; run scripts/fetch_data.py on a networked "
                f"machine, then set ANALOGNN_DATA or use ./data)"))


def synth_dataset(n: int, seed: int, name: str = "mnist") -> Dataset:
    """Learnable stand-in for MNIST: each label lights a class-specific
    8x8 block over low uniform background noise."""
    r = RngStream(seed)
    labels = r.integers(0, 10, size=n)
    imgs = (r.uniform(size=(n, 1, 28, 28)) * 60).astype(np.uint8)
    for i, lab in enumerate(labels):
        r0, c0 = divmod(int(lab), 4)
        imgs[i, 0, 2 + r0 * 7:10 + r0 * 7, 1 + c0 * 7:9 + c0 * 7] = 240
    return Dataset(name, labels, raw_bytes=imgs)


def fd_grad(f, leaves, eps: float = 1e-6) -> list[np.ndarray]:
    """Central finite differences of the scalar f() w.r.t. each leaf's data.

    f must rebuild its graph from the given leaf tensors on every call;
    their buffers are perturbed in place.
    """
    out = []
    for t in leaves:
        g = np.zeros_like(t.data)
        flat, gf = t.data.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            hi = f().item()
            flat[i] = keep - eps
            lo = f().item()
            flat[i] = keep
            gf[i] = (hi - lo) / (2.0 * eps)
        out.append(g)
    return out


def check_grads(f, leaves, rtol: float = 1e-5, atol: float = 1e-7) -> None:
    for t in leaves:
        t.zero_grad()
    got = f().backward()
    want = fd_grad(f, leaves)
    for t, w in zip(leaves, want):
        np.testing.assert_allclose(got[t].data, w, rtol=rtol, atol=atol)


@pytest.fixture(scope="session")
def synth_data_dir(tmp_path_factory) -> Path:
    """Directory shaped like a real data root, holding small synthetic
    MNIST-format files (320 train / 96 test)."""
    root = tmp_path_factory.mktemp("synth_data")
    base = root / "mnist"
    base.mkdir()
    write_idx(synth_dataset(320, 1),
              base / "train-images-idx3-ubyte", base / "train-labels-idx1-ubyte")
    write_idx(synth_dataset(96, 2),
              base / "t10k-images-idx3-ubyte", base / "t10k-labels-idx1-ubyte")
    return root
