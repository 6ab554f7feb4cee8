"""Synthetic sparse binary-classification data written in libsvm format."""
from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np


def write_synthetic_libsvm(path: Union[str, Path], n: int, dim: int = 1000, nnz: int = 20,
                           label_noise: float = 0.05, seed: int = 0, model_seed: int = 0) -> Path:
    """Write ``n`` unit-norm sparse samples labelled by a random hyperplane.

    Each sample has ``nnz`` distinct active features with positive values,
    normalized to ``||x|| = 1``.  The label is ``sign(w . x)`` for a fixed
    Gaussian ``w`` drawn from ``model_seed``, flipped with probability
    ``label_noise``.  Files written with the same ``model_seed`` and
    different ``seed`` share the labelling rule (use this for train/test).
    """
    if n < 1 or dim < 1 or not 1 <= nnz <= dim:
        raise ValueError("need n >= 1, dim >= 1 and 1 <= nnz <= dim")
    w = np.random.default_rng(model_seed).standard_normal(dim)
    rng = np.random.default_rng(seed)
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for _ in range(n):
            idx = np.sort(rng.choice(dim, size=nnz, replace=False))
            val = rng.uniform(0.1, 1.0, nnz)
            val /= np.linalg.norm(val)
            y = 1 if val @ w[idx] > 0 else -1
            if rng.random() < label_noise:
                y = -y
            feats = " ".join(f"{i + 1}:{v:.6g}" for i, v in zip(idx, val))
            fh.write(f"{y} {feats}\n")
    return path
