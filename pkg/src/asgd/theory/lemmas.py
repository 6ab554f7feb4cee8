"""Numerical checks of the auxiliary matrix bounds and stability thresholds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..core import ContractError
from ..schedule import BoundParams, Schedule, c0
from .linear_sa import mean_and_stderr, random_spd

MAX_DIM = 16
PSD_TOL = 1e-10


def _prepare(A, schedule: Schedule, j: int, t: int):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    d = A.shape[0]
    if A.shape != (d, d) or d > MAX_DIM:
        raise ContractError(f"A must be square with dim <= {MAX_DIM}")
    if not 1 <= j <= t:
        raise ContractError("need 1 <= j <= t")
    ev = np.linalg.eigvalsh(A)
    # raises on an inadmissible schedule before any product is formed
    params = BoundParams(float(ev[0]), float(ev[-1]), 0.0, 0.0, schedule)
    return A, params


def x_product(A: np.ndarray, schedule: Schedule, j: int, t: int) -> np.ndarray:
    """``prod_{i=j}^t (I - gamma_i A)``; the identity when ``j > t``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    eye = np.eye(A.shape[0])
    out = eye.copy()
    for i in range(j, t + 1):
        out = (eye - schedule.rate(i) * A) @ out
    return out


def xbar_matrix(A, schedule: Schedule, j: int, t: int) -> np.ndarray:
    """``gamma_j * sum_{i=j}^t X_{j+1}^i`` by direct accumulation of the products."""
    A, _ = _prepare(A, schedule, j, t)
    eye = np.eye(A.shape[0])
    prod = eye.copy()  # X_{j+1}^{j} (empty product)
    total = eye.copy()
    for i in range(j + 1, t + 1):
        prod = (eye - schedule.rate(i) * A) @ prod
        total += prod
    return schedule.rate(j) * total


def sandwich_margins(A, schedule: Schedule, j: int, t: int):
    """Smallest eigenvalues of (X̄ - lower) and (upper - X̄)."""
    A, params = _prepare(A, schedule, j, t)
    s = schedule
    Ainv = np.linalg.inv(A)
    xbar = xbar_matrix(A, s, j, t)
    lower = (np.eye(A.shape[0]) - x_product(A, s, j, t)) @ Ainv
    upper = (1.0 + c0(params) * (1.0 + s.a * s.gamma0 * j) ** (s.c - 1)) * Ainv
    lo = xbar - lower
    hi = upper - xbar
    return (float(np.linalg.eigvalsh(0.5 * (lo + lo.T))[0]),
            float(np.linalg.eigvalsh(0.5 * (hi + hi.T))[0]))


def psd_sandwich_check(A, schedule: Schedule, j: int, t: int) -> bool:
    lo, hi = sandwich_margins(A, schedule, j, t)
    return lo >= -PSD_TOL and hi >= -PSD_TOL


@dataclass
class DivergenceResult:
    diverged: bool
    steps_run: int
    final_norm: float
    max_norm: float

    @property
    def bounded(self) -> bool:
        return not self.diverged


def divergence_check(M: float, gamma: float, steps: int = 100_000, d: int = 10, seed: int = 0,
                     threshold: float = 1e6, noise_std: float = 1.0) -> DivergenceResult:
    """Constant-rate least-squares SGD on inputs with ``||x||^2 = M`` exactly.

    Inputs are uniform directions scaled to radius ``sqrt(M)``; targets are
    ``x . theta* + noise`` with ``theta* = 0``.  Stops as soon as
    ``||theta||`` exceeds ``threshold``.
    """
    if M <= 0 or gamma < 0 or steps < 1:
        raise ContractError("need M > 0, gamma >= 0, steps >= 1")
    rng = np.random.default_rng(seed)
    theta = np.zeros(d)
    thr2 = threshold * threshold
    max_sq = 0.0
    t = 0
    chunk = 4096
    while t < steps:
        n = min(chunk, steps - t)
        X = rng.standard_normal((n, d))
        X *= math.sqrt(M) / np.linalg.norm(X, axis=1, keepdims=True)
        y = noise_std * rng.standard_normal(n)
        for k in range(n):
            t += 1
            x = X[k]
            theta = theta - gamma * (x @ theta - y[k]) * x
            sq = theta @ theta
            if sq > max_sq:
                max_sq = sq
            if not sq <= thr2:  # also catches nan
                return DivergenceResult(True, t, math.sqrt(sq), math.sqrt(max_sq))
    return DivergenceResult(False, t, float(math.sqrt(theta @ theta)), math.sqrt(max_sq))


@dataclass
class Xi2Row:
    estimate: float
    stderr: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.estimate / self.bound if self.bound > 0 else 0.0

    @property
    def passed(self) -> bool:
        return self.estimate <= self.bound + 2 * self.stderr


@dataclass
class Xi2Report:
    M: float
    lambda0: float
    rows: List[Xi2Row] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict:
        return {"check": "xi2_bound", "M": self.M, "lambda0": self.lambda0, "passed": self.passed,
                "rows": [dict(vars(r), ratio=r.ratio, passed=r.passed) for r in self.rows]}


def truncated_inputs(problem, rng: np.random.Generator, n: int, M: float) -> np.ndarray:
    """``n`` inputs from the problem's distribution conditioned on ``||x||^2 <= M``."""
    out = []
    have = 0
    while have < n:
        X = problem.sample_inputs(rng, max(1024, 2 * (n - have)))
        X = X[np.einsum("ij,ij->i", X, X) <= M]
        out.append(X)
        have += X.shape[0]
    return np.concatenate(out)[:n]


def xi2_bound_check(problem, thetas: Sequence[np.ndarray], draws: int = 100_000,
                    M: Optional[float] = None, seed: int = 0, cov_draws: int = 400_000) -> Xi2Report:
    """Monte-Carlo check of ``E||(xx' - S)(theta - theta*)||^2_{S^-1} <= (M/l0)||theta - theta*||^2_S``.

    ``S`` is the second-moment matrix of the truncated input distribution,
    estimated from an independent sample of ``cov_draws`` inputs; ``l0`` is
    its smallest eigenvalue.  ``M`` defaults to ``1.5 * tr(A)``.
    """
    if problem.kind != "regression_toy":
        raise ContractError("xi2_bound_check needs a regression problem")
    if M is None:
        M = 1.5 * float(np.trace(problem.A))
    rng = np.random.default_rng(seed)
    Xc = truncated_inputs(problem, rng, cov_draws, M)
    S = Xc.T @ Xc / Xc.shape[0]
    S = 0.5 * (S + S.T)
    lam0 = float(np.linalg.eigvalsh(S)[0])
    chol = np.linalg.cholesky(S)
    report = Xi2Report(M=float(M), lambda0=lam0)
    for theta in thetas:
        delta = np.asarray(theta, dtype=np.float64) - problem.theta_star
        X = truncated_inputs(problem, rng, draws, M)
        xi = X * (X @ delta)[:, None] - S @ delta
        # ||xi||^2_{S^-1} = ||L^-1 xi||^2 with S = L L'
        z = np.linalg.solve(chol, xi.T)
        vals = np.einsum("ij,ij->j", z, z)
        est, se = mean_and_stderr(vals)
        bound = M / lam0 * float(delta @ S @ delta)
        report.rows.append(Xi2Row(est, se, bound))
    return report


def random_sandwich_case(rng: np.random.Generator, max_dim: int = 8, max_t: int = 500):
    """A random admissible ``(A, schedule, j, t)`` for :func:`psd_sandwich_check`."""
    d = int(rng.integers(1, max_dim + 1))
    lam1 = float(rng.uniform(0.5, 2.0))
    A = random_spd(d, rng, cond=float(rng.uniform(1.0, 50.0)), lambda1=lam1)
    ev = np.linalg.eigvalsh(A)
    c = float(rng.uniform(0.0, 1.0))
    a = float(rng.uniform(0.0, 0.95)) * ev[0] / max(2 * c - 1, 0.25)
    s = Schedule(float(rng.uniform(0.1, 1.0)) / ev[-1], a, c)
    t = int(rng.integers(1, max_t + 1))
    j = int(rng.integers(1, t + 1))
    return A, s, j, t
