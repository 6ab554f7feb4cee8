"""Held-out evaluation: error rate and regularized mean cost."""
from __future__ import annotations

from typing import Iterable, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .core import DataError, Sample
from .losses import LossKind, loss_values


class TestSet:
    """In-memory evaluation set stored as a CSR matrix.

    ``cost`` is the mean loss plus ``lam/2 * ||theta||^2``.  Classification
    predicts +1 for a positive score and -1 for a negative one; a score of
    exactly zero is counted as an error.
    """

    __test__ = False  # not a pytest class

    def __init__(self, samples: Iterable[Sample], dim: int, loss: LossKind, lam: float = 0.0):
        indptr, indices, data, labels = [0], [], [], []
        for s in samples:
            f = s.features
            if f.dim > dim:
                raise DataError(f"test sample dim {f.dim} exceeds model dim {dim}")
            indices.append(f.indices)
            data.append(f.values)
            indptr.append(indptr[-1] + f.nnz)
            labels.append(s.label)
        if not labels:
            raise DataError("empty test set")
        self.X = sp.csr_matrix(
            (np.concatenate(data) if data else np.zeros(0),
             np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64),
             np.asarray(indptr)),
            shape=(len(labels), dim))
        self.y = np.asarray(labels, dtype=np.float64)
        self.dim = dim
        self.loss = LossKind.parse(loss)
        self.lam = float(lam)

    def __len__(self) -> int:
        return self.y.size

    def scores(self, w: np.ndarray) -> np.ndarray:
        if w.shape != (self.dim,):
            raise DataError(f"model dim {w.shape[0]} does not match data dim {self.dim}")
        return self.X @ w

    def error_rate(self, w: np.ndarray) -> Optional[float]:
        if not self.loss.is_classification:
            return None
        s = self.scores(w)
        return float(np.mean(s * self.y <= 0.0))

    def cost(self, w: np.ndarray) -> float:
        s = self.scores(w)
        return float(np.mean(loss_values(self.loss, s, self.y)) + 0.5 * self.lam * np.dot(w, w))

    def __call__(self, w: np.ndarray) -> Tuple[Optional[float], float, Optional[float]]:
        return self.error_rate(w), self.cost(w), None
