"""Synthetic Gaussian problems with known optimum, batch oracles and a multi-arm runner."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core import ContractError, DivergenceError, NumericError
from ..schedule import Schedule
from .linear_sa import CHUNK, GaussianNoise, LinearSaConfig, mean_and_stderr, replicate_rngs

KINDS = ("quadratic_toy", "regression_toy")


@dataclass
class SyntheticProblem:
    """A stream with a known population optimum.

    ``quadratic_toy``: samples ``x ~ N(0, I)``, per-sample loss
    ``1/2 (theta - x)' A (theta - x)`` with optimum 0 and excess risk
    ``theta' A theta``.

    ``regression_toy``: ``x ~ N(0, A)``, ``y = x . theta* + eps`` with
    ``eps ~ N(0, noise_variance)``, squared loss, excess risk
    ``1/2 (theta - theta*)' A (theta - theta*)``.
    """

    kind: str
    A: np.ndarray
    theta_star: np.ndarray
    noise_variance: float = 1.0
    theta0: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown problem kind {self.kind!r}")
        self.A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        d = self.A.shape[0]
        self.theta_star = np.asarray(self.theta_star, dtype=np.float64).reshape(d)
        self.theta0 = np.zeros(d) if self.theta0 is None else np.asarray(self.theta0, dtype=np.float64).reshape(d)
        self.eigenvalues = np.linalg.eigvalsh(self.A)
        w, V = np.linalg.eigh(self.A)
        self._root = V * np.sqrt(np.clip(w, 0.0, None))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.A))

    @property
    def lambda0(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def default_gamma0(self) -> float:
        return 1.0 / self.trace

    def sample_inputs(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        return z if self.kind == "quadratic_toy" else z @ self._root.T

    def draw(self, rng: np.random.Generator, n: int):
        """``n`` samples ``(X, y)``; ``y`` is all zeros for the quadratic toy."""
        X = self.sample_inputs(rng, n)
        if self.kind == "quadratic_toy":
            return X, np.zeros(n)
        y = X @ self.theta_star + math.sqrt(self.noise_variance) * rng.standard_normal(n)
        return X, y

    def gradient(self, theta: np.ndarray, x: np.ndarray, y) -> np.ndarray:
        """Per-sample gradient; works row-wise on stacked ``theta`` and ``x``."""
        if self.kind == "quadratic_toy":
            return (theta - x) @ self.A
        r = np.einsum("...i,...i->...", x, theta) - y
        return x * np.asarray(r)[..., None]

    def excess_risk(self, theta: np.ndarray):
        e = np.asarray(theta, dtype=np.float64) - self.theta_star
        q = np.einsum("...i,ij,...j->...", e, self.A, e)
        return q if self.kind == "quadratic_toy" else 0.5 * q

    def linear_sa_config(self, schedule: Schedule, seed: Optional[int] = None) -> LinearSaConfig:
        """The equivalent linear SA process (quadratic toy only: its noise is state-free)."""
        if self.kind != "quadratic_toy":
            raise ContractError("only the quadratic toy has state-independent gradient noise")
        return LinearSaConfig(self.A, np.zeros(self.dim), GaussianNoise(self.A @ self.A),
                              self.theta0, schedule, self.seed if seed is None else seed)


def excess_risk(problem: SyntheticProblem, theta):
    return problem.excess_risk(theta)


def make_quadratic_toy(d: int = 100, n_large: int = 3, small: float = 0.02,
                       theta0=None, seed: int = 0) -> SyntheticProblem:
    """Diagonal curvature ``[1]*n_large + [small]*(d - n_large)``; starts at all-ones by default."""
    ev = np.full(d, small)
    ev[:n_large] = 1.0
    theta0 = np.ones(d) if theta0 is None else theta0
    return SyntheticProblem("quadratic_toy", np.diag(ev), np.zeros(d), 0.0, theta0, seed)


def make_regression_toy(d: int = 100, low: float = 0.01, high: float = 1.0,
                        noise_variance: float = 1.0, theta0=None, seed: int = 0) -> SyntheticProblem:
    """Input covariance with eigenvalues evenly spaced in ``[low, high]``; ``theta* = 1``."""
    A = np.diag(np.linspace(low, high, d))
    return SyntheticProblem("regression_toy", A, np.ones(d), noise_variance, theta0, seed)


def batch_mean(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ContractError("batch_mean of no samples")
    return X.mean(axis=0)


def _solve_gram(G: np.ndarray, r: np.ndarray) -> np.ndarray:
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(r))):
        raise NumericError("Gram matrix or moment vector is not finite")
    G = 0.5 * (G + G.T)
    if np.linalg.cond(G) > 1e12:
        G = G + 1e-10 * np.eye(G.shape[0])
        if not np.linalg.cond(G) < 1.0 / np.finfo(float).eps:
            raise NumericError("Gram matrix singular even after regularization")
    try:
        return np.linalg.solve(G, r)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"least squares failed: {exc}") from None


def batch_least_squares(X, y) -> np.ndarray:
    """``(sum x x')^-1 sum x y``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    return _solve_gram(X.T @ X, X.T @ y)


@dataclass(frozen=True)
class Arm:
    """One estimator in a comparison: ``asgd`` reports the running mean of
    the SGD iterates, ``sgd`` the last iterate, ``batch`` the batch oracle."""

    name: str
    kind: str
    schedule: Optional[Schedule] = None

    def __post_init__(self):
        if self.kind not in ("asgd", "sgd", "batch"):
            raise ContractError(f"unknown arm kind {self.kind!r}")
        if self.kind != "batch" and self.schedule is None:
            raise ContractError(f"arm {self.name!r} needs a schedule")


@dataclass
class ArmsResult:
    checkpoints: List[int]
    arms: List[Arm]
    excess: Dict[str, np.ndarray] = field(default_factory=dict)  # (checkpoints, seeds)

    def mean(self, name: str) -> np.ndarray:
        return np.array([mean_and_stderr(row)[0] for row in self.excess[name]])

    def stderr(self, name: str) -> np.ndarray:
        return np.array([mean_and_stderr(row)[1] for row in self.excess[name]])

    def final_mean(self, name: str) -> float:
        return float(self.mean(name)[-1])


def run_arms(problem: SyntheticProblem, arms: Sequence[Arm], checkpoints: Sequence[int],
             seeds: int = 10, base_seed: int = 0) -> ArmsResult:
    """Run every arm on the same sample streams (one stream per seed).

    Seeds advance together in a vectorised loop.  Batch arms keep running
    sums (mean) or Gram matrices (least squares) so no sample is stored.
    """
    cps = sorted(set(int(c) for c in checkpoints))
    if not cps or cps[0] < 1:
        raise ContractError("checkpoints must be positive")
    if len({a.name for a in arms}) != len(arms):
        raise ContractError("arm names must be unique")
    rngs = replicate_rngs(base_seed, seeds)
    d = problem.dim
    quad = problem.kind == "quadratic_toy"
    iterative = [a for a in arms if a.kind != "batch"]
    theta = {a.name: np.tile(problem.theta0, (seeds, 1)) for a in iterative}
    bar = {a.name: np.tile(problem.theta0, (seeds, 1)) for a in iterative if a.kind == "asgd"}
    has_batch = any(a.kind == "batch" for a in arms)
    sum_x = np.zeros((seeds, d))
    gram = np.zeros((seeds, d, d))
    xy = np.zeros((seeds, d))
    result = ArmsResult(cps, list(arms), {a.name: np.empty((len(cps), seeds)) for a in arms})
    t = 0
    ci = 0
    while t < cps[-1]:
        n = min(CHUNK, cps[ci] - t)
        draws = [problem.draw(r, n) for r in rngs]
        X = np.stack([dx for dx, _ in draws], axis=1)  # (n, seeds, d)
        Y = np.stack([dy for _, dy in draws], axis=1)  # (n, seeds)
        gammas = {a.name: a.schedule.rate(np.arange(t + 1, t + n + 1)) for a in iterative}
        for k in range(n):
            x, y = X[k], Y[k]
            step = t + k + 1
            for a in iterative:
                th = theta[a.name]
                th -= gammas[a.name][k] * problem.gradient(th, x, y)
                if a.kind == "asgd":
                    b = bar[a.name]
                    b += (th - b) / step
        if has_batch:
            if quad:
                sum_x += X.sum(axis=0)
            else:
                gram += np.einsum("nsi,nsj->sij", X, X)
                xy += np.einsum("nsi,ns->si", X, Y)
        t += n
        if t == cps[ci]:
            for a in arms:
                if a.kind == "batch":
                    est = sum_x / t if quad else np.stack([_solve_gram(gram[s], xy[s]) for s in range(seeds)])
                elif a.kind == "asgd":
                    est = bar[a.name]
                else:
                    est = theta[a.name]
                if not np.all(np.isfinite(est)):
                    raise DivergenceError(f"arm {a.name!r} diverged", t)
                result.excess[a.name][ci] = problem.excess_risk(est)
            ci += 1
    return result


def toy1_arms(problem: SyntheticProblem) -> List[Arm]:
    """ASGD with the recommended decay, a badly tuned ASGD, plain SGD, and the batch mean."""
    return [
        Arm("asgd", "asgd", Schedule(1.0, 0.02, 2.0 / 3.0)),
        Arm("asgd_bad", "asgd", Schedule(1.0, 1.0, 0.5)),
        Arm("sgd", "sgd", Schedule(1.0, 0.02, 1.0)),
        Arm("batch", "batch"),
    ]


def toy2_arms(problem: SyntheticProblem) -> List[Arm]:
    """ASGD and SGD with ``gamma0 = 1/tr(A)``, plus batch least squares."""
    g0 = problem.default_gamma0
    return [
        Arm("asgd", "asgd", Schedule(g0, problem.lambda0, 2.0 / 3.0)),
        Arm("sgd", "sgd", Schedule(g0, problem.lambda0, 1.0)),
        Arm("batch", "batch"),
    ]
