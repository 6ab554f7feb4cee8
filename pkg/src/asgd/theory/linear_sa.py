"""Linear stochastic approximation ``theta_t = theta_{t-1} - g_t (A theta_{t-1} - b + xi_t)``.

Used to check the finite-sample bound on the averaged iterate by Monte
Carlo: replicates are independent trajectories, each driven by its own
generator spawned from one base seed, so results do not depend on how many
replicates run or how they are batched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..core import ContractError, DivergenceError, StructuralError
from ..schedule import BoundParams, Schedule, theorem1_bound

CHUNK = 1024


def replicate_rngs(base_seed: int, n: int) -> List[np.random.Generator]:
    """Independent generators; replicate ``i`` depends only on ``(base_seed, i)``."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(base_seed).spawn(n)]


class GaussianNoise:
    """Zero-mean Gaussian innovations with covariance ``cov``."""

    def __init__(self, cov):
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        if cov.shape[0] != cov.shape[1]:
            raise StructuralError("noise covariance must be square")
        cov = 0.5 * (cov + cov.T)
        w, V = np.linalg.eigh(cov)
        if w.size and w[0] < -1e-10 * max(1.0, abs(w[-1])):
            raise ContractError("noise covariance is not positive semi-definite")
        self.cov = cov
        self._root = V * np.sqrt(np.clip(w, 0.0, None))

    @property
    def dim(self) -> int:
        return self.cov.shape[0]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        return z @ self._root.T


@dataclass
class LinearSaConfig:
    A: np.ndarray
    b: np.ndarray
    noise: GaussianNoise
    theta0: np.ndarray
    schedule: Schedule
    seed: int = 0

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        d = self.A.shape[0]
        self.b = np.asarray(self.b, dtype=np.float64).reshape(d)
        self.theta0 = np.asarray(self.theta0, dtype=np.float64).reshape(d)
        if self.A.shape != (d, d):
            raise StructuralError("A must be square")
        if self.noise.dim != d:
            raise StructuralError("noise dimension does not match A")
        if np.max(np.abs(self.A - self.A.T), initial=0.0) > 1e-12:
            raise ContractError("A must be symmetric")
        self.eigenvalues = np.linalg.eigvalsh(self.A)
        if self.eigenvalues[0] <= 0:
            raise ContractError("A must be positive definite")

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def theta_star(self) -> np.ndarray:
        return np.linalg.solve(self.A, self.b)

    def bound_params(self, check: bool = True) -> BoundParams:
        delta0 = self.theta0 - self.theta_star
        return BoundParams(
            lambda0=float(self.eigenvalues[0]),
            lambda1=float(self.eigenvalues[-1]),
            trace_AinvS=float(np.trace(np.linalg.solve(self.A, self.noise.cov))),
            delta0_Ainv_sq=float(delta0 @ np.linalg.solve(self.A, delta0)),
            schedule=self.schedule,
            check=check,
        )


@dataclass
class LinearSaTrajectory:
    """Row ``t`` holds ``theta_t`` / ``avg_theta_t``; row 0 is the start point."""

    thetas: np.ndarray
    theta_bars: np.ndarray


def run_linear_sa(cfg: LinearSaConfig, steps: int, rng: Optional[np.random.Generator] = None,
                  innovations: Optional[Callable[[int, np.ndarray], np.ndarray]] = None) -> LinearSaTrajectory:
    """Run one trajectory of the recursion and its running mean.

    ``innovations(t, theta_prev)`` overrides the configured noise; it lets a
    caller feed state-dependent noise built from an explicit sample stream.
    """
    if steps < 1:
        raise ContractError("steps must be >= 1")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    d = cfg.dim
    A, b = cfg.A, cfg.b
    thetas = np.empty((steps + 1, d))
    bars = np.empty((steps + 1, d))
    theta = cfg.theta0.copy()
    bar = theta.copy()
    thetas[0] = theta
    bars[0] = bar
    t = 0
    while t < steps:
        n = min(CHUNK, steps - t)
        xi = cfg.noise.sample(rng, n) if innovations is None else None
        gammas = cfg.schedule.rate(np.arange(t + 1, t + n + 1))
        for k in range(n):
            t += 1
            noise = xi[k] if innovations is None else innovations(t, theta)
            with np.errstate(over="ignore", invalid="ignore"):
                theta = theta - gammas[k] * (A @ theta - b + noise)
            if not np.all(np.isfinite(theta)):
                raise DivergenceError("linear SA iterate became non-finite", t)
            bar = bar + (theta - bar) / t
            thetas[t] = theta
            bars[t] = bar
    return LinearSaTrajectory(thetas, bars)


def replicate_errors(cfg: LinearSaConfig, replicates: int, checkpoints: Sequence[int]) -> np.ndarray:
    """``t * ||avg_theta_t - theta*||_A^2`` per checkpoint (rows) and replicate (cols).

    All replicates advance together; replicate ``i`` draws its noise from
    ``replicate_rngs(cfg.seed, replicates)[i]`` in the same chunks as
    :func:`run_linear_sa`, so its trajectory matches a single run with
    that generator.
    """
    cps = sorted(set(int(c) for c in checkpoints))
    if not cps or cps[0] < 1:
        raise ContractError("checkpoints must be positive")
    rngs = replicate_rngs(cfg.seed, replicates)
    A, b = cfg.A, cfg.b
    star = cfg.theta_star
    theta = np.tile(cfg.theta0, (replicates, 1))
    bar = theta.copy()
    out = np.empty((len(cps), replicates))
    steps = cps[-1]
    t = 0
    ci = 0
    while t < steps:
        n = min(CHUNK, steps - t)
        xi = np.stack([cfg.noise.sample(r, n) for r in rngs], axis=1)  # (n, R, d)
        gammas = cfg.schedule.rate(np.arange(t + 1, t + n + 1))
        for k in range(n):
            t += 1
            theta = theta - gammas[k] * (theta @ A.T - b + xi[k])
            bar += (theta - bar) / t
            if t == cps[ci]:
                if not np.all(np.isfinite(bar)):
                    raise DivergenceError("linear SA replicate became non-finite", t)
                e = bar - star
                out[ci] = t * np.einsum("ri,ij,rj->r", e, A, e)
                ci += 1
    return out


@dataclass
class CheckpointRow:
    t: int
    estimate: float
    stderr: float
    bound: float
    passed: bool


@dataclass
class Theorem1Report:
    replicates: int
    rows: List[CheckpointRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict:
        return {"check": "theorem1", "replicates": self.replicates, "passed": self.passed,
                "rows": [vars(r) for r in self.rows]}


def mean_and_stderr(values: np.ndarray):
    """Order-independent mean (exact summation) and standard error."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    mean = math.fsum(values.tolist()) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum(((values - mean) ** 2).tolist()) / (n - 1)
    return mean, math.sqrt(var / n)


def verify_theorem1(cfg: LinearSaConfig, seeds: int, checkpoints: Sequence[int]) -> Theorem1Report:
    """Compare Monte-Carlo ``t E||avg_theta_t - theta*||_A^2`` with the bound.

    A checkpoint passes when ``estimate - 2*stderr <= bound``.
    """
    params = cfg.bound_params(check=True)
    if seeds < 1:
        raise ContractError("need at least one replicate")
    cps = sorted(set(int(c) for c in checkpoints))
    errs = replicate_errors(cfg, seeds, cps)
    report = Theorem1Report(replicates=seeds)
    for t, row in zip(cps, errs):
        est, se = mean_and_stderr(row)
        bound = theorem1_bound(params, t)
        report.rows.append(CheckpointRow(t, est, se, bound, bool(est - 2 * se <= bound)))
    return report


def random_spd(d: int, rng: np.random.Generator, cond: float = 100.0, lambda1: float = 1.0) -> np.ndarray:
    """Random symmetric positive-definite matrix with spectrum in ``[lambda1/cond, lambda1]``.

    The extreme eigenvalues are attained exactly; the rest are log-uniform.
    """
    if d < 1 or cond < 1:
        raise ContractError("need d >= 1 and cond >= 1")
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    lo = lambda1 / cond
    ev = np.exp(rng.uniform(math.log(lo), math.log(lambda1), d))
    ev[0] = lo
    if d > 1:
        ev[-1] = lambda1
    A = (q * ev) @ q.T
    return 0.5 * (A + A.T)


def theorem1_case(seed: int = 0, d: int = 10, cond: float = 100.0, schedule: Optional[Schedule] = None,
                  noise_scale: float = 1.0) -> LinearSaConfig:
    """Random SPD problem with isotropic noise, started at the origin.

    The default schedule is ``gamma0 = 1/lambda1, a = lambda0, c = 2/3``.
    """
    rng = np.random.default_rng(seed)
    A = random_spd(d, rng, cond=cond)
    b = rng.standard_normal(d)
    ev = np.linalg.eigvalsh(A)
    if schedule is None:
        schedule = Schedule(1.0 / ev[-1], float(ev[0]), 2.0 / 3.0)
    noise = GaussianNoise(noise_scale ** 2 * np.eye(d))
    return LinearSaConfig(A, b, noise, np.zeros(d), schedule, seed)
