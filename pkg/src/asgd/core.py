"""Shared domain types: sparse feature vectors, samples, models, metric rows.

Also hosts the package exception hierarchy and a coordinate-touch counter
used by tests to confirm that the sparse kernels do O(nnz) work.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence, Tuple

import numpy as np


class AsgdError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(AsgdError, ValueError):
    """A precondition on arguments was violated."""


class StructuralError(AsgdError, IndexError):
    """Shapes or indices do not fit together."""


class NumericError(AsgdError, ArithmeticError):
    """A computation produced or would produce a non-finite value."""


class StepSizeError(NumericError):
    """The L2 shrink factor 1 - lambda * gamma is not positive."""


class DivergenceError(NumericError):
    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class DataError(AsgdError):
    """Input data is inconsistent with the declared configuration."""


class ParseError(DataError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.column = column


# -- touch accounting ---------------------------------------------------------

class TouchCounter:
    """Counts dense-vector coordinates read or written by the kernels."""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += n


_touches: Optional[TouchCounter] = None


@contextmanager
def count_touches() -> Iterator[TouchCounter]:
    global _touches
    prev, _touches = _touches, TouchCounter()
    try:
        yield _touches
    finally:
        _touches = prev


def record_touches(n: int) -> None:
    if _touches is not None:
        _touches.count += n


# -- sparse vectors -----------------------------------------------------------

class SparseVector:
    """Immutable sparse vector in canonical form.

    Indices are strictly increasing, every index is below ``dim`` and no
    stored value is zero.  Build from arbitrary pairs with
    :meth:`from_pairs`; duplicate indices are summed before zeros are dropped.
    """

    __slots__ = ("indices", "values", "dim")

    def __init__(self, indices, values, dim: Optional[int] = None):
        idx = np.array(indices, dtype=np.int64).reshape(-1)
        val = np.array(values, dtype=np.float64).reshape(-1)
        if idx.shape != val.shape:
            raise StructuralError("indices and values differ in length")
        if idx.size and idx.min() < 0:
            raise StructuralError("negative feature index")
        max_dim = int(idx.max()) + 1 if idx.size else 0
        if idx.size and np.any(idx[1:] <= idx[:-1]):
            idx, val = _canonical(idx, val)
        elif val.size and not np.all(val):
            keep = val != 0.0
            idx, val = idx[keep], val[keep]
        if dim is None:
            dim = max_dim
        elif dim < max_dim:
            raise StructuralError(f"index {max_dim - 1} out of range for dim {dim}")
        idx.flags.writeable = False
        val.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "dim", int(dim))

    def __setattr__(self, name, value):
        raise AttributeError("SparseVector is immutable")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, float]], dim: Optional[int] = None) -> "SparseVector":
        pairs = list(pairs)
        if not pairs:
            return cls([], [], dim)
        idx, val = zip(*pairs)
        return cls(idx, val, dim)

    @classmethod
    def from_dense(cls, x: Sequence[float]) -> "SparseVector":
        x = np.asarray(x, dtype=np.float64)
        nz = np.flatnonzero(x)
        return cls(nz, x[nz], x.size)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def entries(self) -> list:
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def squared_norm(self) -> float:
        return float(np.dot(self.values, self.values))

    def with_dim(self, dim: int) -> "SparseVector":
        return SparseVector(self.indices, self.values, dim)

    def append(self, index: int, value: float) -> "SparseVector":
        """Return a copy with one extra trailing coordinate (bias feature)."""
        if self.indices.size and index <= self.indices[-1]:
            raise StructuralError("appended index must exceed existing indices")
        return SparseVector(np.append(self.indices, index), np.append(self.values, value),
                            max(self.dim, index + 1))

    def to_dense(self, dim: Optional[int] = None) -> np.ndarray:
        out = np.zeros(self.dim if dim is None else dim)
        out[self.indices] = self.values
        return out

    def __len__(self) -> int:
        return self.nnz

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (self.dim == other.dim and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))

    __hash__ = None

    def __repr__(self) -> str:
        return f"SparseVector({self.entries()!r}, dim={self.dim})"


def _canonical(idx: np.ndarray, val: np.ndarray):
    order = np.argsort(idx, kind="stable")
    idx, val = idx[order], val[order]
    if idx.size > 1:
        starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
        val = np.add.reduceat(val, starts)
        idx = idx[starts]
    keep = val != 0.0
    return idx[keep], val[keep]


@dataclass(frozen=True)
class Sample:
    features: SparseVector
    label: float

    @property
    def dim(self) -> int:
        return self.features.dim


@dataclass
class LinearModel:
    """Dense weight vector of a linear scorer ``s = theta . x`` (no bias)."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise StructuralError("weights must be one-dimensional")
        if not np.all(np.isfinite(self.weights)):
            raise NumericError("model weights are not finite")

    @classmethod
    def zeros(cls, dim: int) -> "LinearModel":
        return cls(np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.weights.size

    def score(self, x: SparseVector) -> float:
        return dot(x, self.weights)


@dataclass
class MetricsRecord:
    step: int
    passes: float
    test_cost: float
    elapsed_seconds: float
    test_error_rate: Optional[float] = None
    excess_risk: Optional[float] = None
    model: str = "theta"


# -- kernels ------------------------------------------------------------------

def _check_range(v: SparseVector, w: np.ndarray) -> None:
    if v.indices.size and v.indices[-1] >= w.shape[0]:
        raise StructuralError(f"index {int(v.indices[-1])} out of range for length {w.shape[0]}")


def dot(v: SparseVector, w: np.ndarray) -> float:
    """Inner product of a sparse vector with a dense one in O(nnz)."""
    _check_range(v, w)
    n = v.indices.size
    if _touches is not None:
        _touches.count += n
    if n == 0:
        return 0.0
    return float(np.dot(w[v.indices], v.values))


def axpy_sparse(scale: float, v: SparseVector, w: np.ndarray) -> None:
    """``w += scale * v`` in place, touching only the stored coordinates."""
    if not math.isfinite(scale):
        raise NumericError(f"non-finite scale {scale!r}")
    _check_range(v, w)
    if _touches is not None:
        _touches.count += v.indices.size
    if scale != 0.0 and v.indices.size:
        w[v.indices] += scale * v.values
