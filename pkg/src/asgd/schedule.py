"""Learning-rate schedules ``gamma_t = gamma0 * (1 + a*gamma0*t) ** -c``.

Besides the schedule itself this module carries the finite-sample bound on
``t * E||avg_theta_t - theta*||_A^2`` for the averaged linear recursion, its
constant ``c0`` and the admissibility conditions under which it holds.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import ContractError
from .losses import LossKind

# relative slack when testing gamma0 * lambda1 <= 1, so gamma0 = 1/lambda1
# computed in floating point is still admissible
_ADMISSIBLE_RTOL = 1e-12


@dataclass(frozen=True)
class Schedule:
    gamma0: float
    a: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if not self.gamma0 > 0 or not np.isfinite(self.gamma0):
            raise ContractError(f"gamma0 must be positive, got {self.gamma0!r}")
        if not self.a >= 0 or not np.isfinite(self.a):
            raise ContractError(f"a must be nonnegative, got {self.a!r}")
        if not 0 <= self.c <= 1:
            raise ContractError(f"c must lie in [0, 1], got {self.c!r}")

    def rate(self, t):
        """Step size at (1-based) step ``t``; accepts scalars or arrays."""
        if np.ndim(t) == 0:
            if t < 0:
                raise ContractError("step index must be nonnegative")
            return self.gamma0 * (1.0 + self.a * self.gamma0 * t) ** (-self.c)
        t = np.asarray(t, dtype=np.float64)
        return self.gamma0 * (1.0 + self.a * self.gamma0 * t) ** (-self.c)

    __call__ = rate

    def to_dict(self) -> dict:
        return {"gamma0": self.gamma0, "a": self.a, "c": self.c}

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(float(d["gamma0"]), float(d.get("a", 0.0)), float(d.get("c", 1.0)))

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        """Parse ``"gamma0,a,c"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ContractError(f"schedule must be 'gamma0,a,c', got {text!r}")
        try:
            return cls(*(float(p) for p in parts))
        except ValueError as exc:
            raise ContractError(f"bad schedule {text!r}: {exc}") from None

    def __str__(self) -> str:
        return f"gamma_t = {self.gamma0:.6g} * (1 + {self.a:.6g} * {self.gamma0:.6g} * t)^(-{self.c:.6g})"


def rate(s: Schedule, t):
    return s.rate(t)


def recommended_schedule(loss: Union[LossKind, str], M: float, lambda0: float) -> Schedule:
    """gamma0 = 1/M and a = lambda0; c = 2/3 for squared loss, else 3/4."""
    loss = LossKind.parse(loss)
    if not M > 0:
        raise ContractError(f"M must be positive, got {M!r}")
    if not lambda0 > 0:
        raise ContractError(f"lambda0 must be positive, got {lambda0!r}")
    c = 2.0 / 3.0 if loss is LossKind.SQUARED else 0.75
    return Schedule(1.0 / M, lambda0, c)


@dataclass(frozen=True)
class BoundParams:
    """Problem constants entering the averaged-iterate bound.

    ``check=False`` skips the admissibility test (for experiments outside
    the hypotheses); :func:`c0` and :func:`theorem1_bound` re-check anyway.
    """

    lambda0: float
    lambda1: float
    trace_AinvS: float
    delta0_Ainv_sq: float
    schedule: Schedule
    check: bool = True

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ContractError("lambda0 must be positive")
        if self.lambda1 < self.lambda0:
            raise ContractError("lambda1 must be >= lambda0")
        if self.trace_AinvS < 0 or self.delta0_Ainv_sq < 0:
            raise ContractError("trace and initial distance must be nonnegative")
        if self.check:
            self.require_admissible()

    def violations(self) -> list:
        s = self.schedule
        out = []
        if s.gamma0 * self.lambda1 > 1.0 + _ADMISSIBLE_RTOL:
            out.append(f"gamma0*lambda1 <= 1 violated ({s.gamma0 * self.lambda1:.6g} > 1)")
        if (2 * s.c - 1) * s.a >= self.lambda0:
            out.append(f"(2c-1)*a < lambda0 violated ({(2 * s.c - 1) * s.a:.6g} >= {self.lambda0:.6g})")
        return out

    @property
    def admissible(self) -> bool:
        return not self.violations()

    def require_admissible(self) -> None:
        v = self.violations()
        if v:
            raise ContractError("inadmissible schedule: " + "; ".join(v))

    @property
    def kappa(self) -> float:
        s = self.schedule
        return 1.0 - max(0.0, 2 * s.c - 1) * s.a / self.lambda0

    def unchecked(self) -> "BoundParams":
        return BoundParams(self.lambda0, self.lambda1, self.trace_AinvS, self.delta0_Ainv_sq,
                           self.schedule, check=False)


def c0(p: BoundParams) -> float:
    p.require_admissible()
    s = p.schedule
    ac = s.a * s.c
    return ac * (1.0 + ac * s.gamma0) / (p.lambda0 - max(0.0, 2 * s.c - 1) * s.a)


def theorem1_bound(p: BoundParams, t) -> float:
    """Upper bound on ``t * E||avg_theta_t - theta*||_A^2`` after ``t`` steps.

    Three terms: the asymptotic ``tr(A^-1 S)``, a schedule-dependent
    correction decaying like ``t^(c-1)``, and the initial-distance term
    decaying like ``1/t``.  Only defined for ``c > 0``.
    """
    s = p.schedule
    if s.c <= 0:
        raise ContractError("bound is undefined for c = 0")
    if np.any(np.asarray(t) < 1):
        raise ContractError("t must be >= 1")
    k = c0(p)
    t = np.asarray(t, dtype=np.float64)
    tr = p.trace_AinvS
    out = (tr
           + (2 * k + k * k) * (1.0 + s.a * s.gamma0 * t) ** (s.c - 1) / s.c * tr
           + (1 + k) ** 2 / (s.gamma0 ** 2 * t) * p.delta0_Ainv_sq)
    return float(out) if out.ndim == 0 else out
