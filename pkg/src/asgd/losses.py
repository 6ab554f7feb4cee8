"""Losses ``L(s, y)`` of a linear score ``s`` and their derivatives in ``s``.

L2 regularization is not part of these functions: the trainers apply it as
a multiplicative shrink of the weights.
"""
from __future__ import annotations

import enum
import math

import numpy as np

from .core import ContractError


class LossKind(enum.Enum):
    SQUARED = "squared"
    HINGE = "hinge"
    SQUARED_HINGE = "l2svm"
    LOGISTIC = "logistic"

    @property
    def is_classification(self) -> bool:
        return self is not LossKind.SQUARED

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"squared_hinge": "l2svm", "squared-hinge": "l2svm", "svm": "hinge",
                   "log": "logistic", "least_squares": "squared"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ContractError(f"unknown loss {value!r}; expected one of "
                                f"{[k.value for k in cls]}") from None


def _check_label(kind: LossKind, y: float) -> None:
    if kind is not LossKind.SQUARED and y != 1.0 and y != -1.0:
        raise ContractError(f"{kind.value} loss needs labels in {{-1, +1}}, got {y!r}")


def loss_value(kind: LossKind, s: float, y: float) -> float:
    _check_label(kind, y)
    if kind is LossKind.SQUARED:
        r = y - s
        return 0.5 * r * r
    z = y * s
    if kind is LossKind.HINGE:
        return max(0.0, 1.0 - z)
    if kind is LossKind.SQUARED_HINGE:
        m = max(0.0, 1.0 - z)
        return 0.5 * m * m
    # log(1 + exp(-z)) without overflow
    return math.log1p(math.exp(-abs(z))) + max(0.0, -z)


def loss_deriv(kind: LossKind, s: float, y: float) -> float:
    """dL/ds; the hinge subgradient at the kink ``ys = 1`` is 0."""
    _check_label(kind, y)
    if kind is LossKind.SQUARED:
        return s - y
    z = y * s
    if kind is LossKind.HINGE:
        return -y if z < 1.0 else 0.0
    if kind is LossKind.SQUARED_HINGE:
        return -y * (1.0 - z) if z < 1.0 else 0.0
    if z >= 0:
        e = math.exp(-z)
        return -y * e / (1.0 + e)
    return -y / (1.0 + math.exp(z))


def loss_values(kind: LossKind, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorised :func:`loss_value` for evaluation over a dataset."""
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if kind.is_classification and y.size and not np.all(np.abs(y) == 1.0):
        raise ContractError(f"{kind.value} loss needs labels in {{-1, +1}}")
    if kind is LossKind.SQUARED:
        return 0.5 * (y - s) ** 2
    z = y * s
    if kind is LossKind.HINGE:
        return np.maximum(0.0, 1.0 - z)
    if kind is LossKind.SQUARED_HINGE:
        return 0.5 * np.maximum(0.0, 1.0 - z) ** 2
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(0.0, -z)
