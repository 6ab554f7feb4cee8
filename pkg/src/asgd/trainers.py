"""Plain SGD and sparse averaged SGD over streams of samples.

Both trainers keep the weights in scaled form ``theta = u / alpha`` with
``alpha = prod 1/(1 - lam*gamma_i)``, so the L2 shrink costs O(1) and a step
touches only the nonzero coordinates of the sample.  The averaged trainer
additionally keeps ``(beta, tau, u_hat)`` so that

    avg_theta = (tau * u + u_hat) / beta

is available at any time while each step stays O(nnz).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    ContractError,
    DivergenceError,
    LinearModel,
    MetricsRecord,
    Sample,
    StepSizeError,
    StructuralError,
    axpy_sparse,
    dot,
    record_touches,
)
from .losses import LossKind, loss_deriv, loss_value
from .schedule import Schedule

ANCHOR_LIMIT = 1e100
# The averaged iterate is recovered as (tau*u + u_hat)/beta, and the two
# terms cancel to a relative error of roughly eps * alpha, so alpha is kept
# small as well as finite.
ALPHA_LIMIT = 1e6


def _shrink(lam: float, gamma: float, t: int) -> float:
    keep = 1.0 - lam * gamma
    if keep <= 0.0:
        raise StepSizeError(f"regularization shrink nonpositive: 1 - {lam:g}*{gamma:g} = {keep:g} at step {t}")
    return keep


def _check_dim(sample: Sample, dim: int) -> None:
    if sample.features.dim > dim:
        raise StructuralError(f"sample dim {sample.features.dim} exceeds model dim {dim}")


class SgdState:
    """SGD with L2 shrink: ``theta_t = (1 - lam*g_t) theta_{t-1} - g_t L_s(theta.x, y) x``."""

    def __init__(self, dim: int, schedule: Schedule, lam: float = 0.0,
                 loss: LossKind = LossKind.SQUARED, theta0=None):
        if lam < 0:
            raise ContractError("lambda must be nonnegative")
        self.dim = int(dim)
        self.schedule = schedule
        self.lam = float(lam)
        self.loss = LossKind.parse(loss)
        self.u = np.zeros(self.dim) if theta0 is None else np.array(theta0, dtype=np.float64)
        if self.u.shape != (self.dim,):
            raise StructuralError("theta0 has the wrong length")
        self.alpha = 1.0
        self.t = 0

    @property
    def theta(self) -> np.ndarray:
        return self.u / self.alpha

    def step(self, sample: Sample) -> "SgdState":
        x = sample.features
        _check_dim(sample, self.dim)
        t = self.t + 1
        gamma = self.schedule.rate(t)
        keep = _shrink(self.lam, gamma, t)
        s = dot(x, self.u) / self.alpha
        ls = loss_deriv(self.loss, s, sample.label)
        self.alpha = self.alpha / keep
        if ls != 0.0:
            scale = self.alpha * gamma * ls
            if not math.isfinite(scale):
                raise DivergenceError("SGD step size overflowed", t)
            axpy_sparse(-scale, x, self.u)
        self.t = t
        if not (math.isfinite(s) and np.isfinite(self.u[x.indices]).all()):
            raise DivergenceError("SGD iterate became non-finite", t)
        if self.alpha > ANCHOR_LIMIT:
            self.re_anchor()
        return self

    def re_anchor(self) -> "SgdState":
        record_touches(self.dim)
        self.u = self.u / self.alpha
        self.alpha = 1.0
        return self

    def recover(self) -> LinearModel:
        return LinearModel(self.theta)


def sgd_step(st: SgdState, sample: Sample) -> SgdState:
    """Advance ``st`` by one sample (in place) and return it."""
    return st.step(sample)


class StartDetector:
    """Decides when iterate averaging should begin.

    Keeps an exponential moving average ``theta_ema`` of the iterates and
    moving averages of the per-sample losses of the iterate and of
    ``theta_ema``.  Fires once the averaged iterate's loss average drops
    strictly below the raw iterate's, but not before ``warmup`` steps.
    ``fixed_t0`` replaces the rule by a fixed start step.
    """

    def __init__(self, theta0: np.ndarray, decay: float = 0.99, warmup: int = 50,
                 fixed_t0: Optional[int] = None):
        if not 0.0 < decay < 1.0:
            raise ContractError("decay must lie in (0, 1)")
        if warmup < 0:
            raise ContractError("warmup must be nonnegative")
        if fixed_t0 is not None and fixed_t0 < 0:
            raise ContractError("fixed_t0 must be nonnegative")
        self.theta_ema = np.array(theta0, dtype=np.float64)
        self.loss_ema_theta: Optional[float] = None
        self.loss_ema_ema: Optional[float] = None
        self.decay = float(decay)
        self.warmup = int(warmup)
        self.fixed_t0 = fixed_t0
        self.triggered = False

    def update(self, theta: np.ndarray, sample_loss_theta: float, sample_loss_ema: float, t: int) -> bool:
        if self.triggered:
            return True
        if self.fixed_t0 is not None:
            self.triggered = t >= self.fixed_t0
            return self.triggered
        d = self.decay
        record_touches(2 * self.theta_ema.size)
        self.theta_ema *= d
        self.theta_ema += (1.0 - d) * theta
        if self.loss_ema_theta is None:
            self.loss_ema_theta = float(sample_loss_theta)
            self.loss_ema_ema = float(sample_loss_ema)
        else:
            self.loss_ema_theta = d * self.loss_ema_theta + (1.0 - d) * sample_loss_theta
            self.loss_ema_ema = d * self.loss_ema_ema + (1.0 - d) * sample_loss_ema
        self.triggered = t >= self.warmup and self.loss_ema_ema < self.loss_ema_theta
        return self.triggered


def detector_update(d: StartDetector, theta, sample_loss_theta: float, sample_loss_ema: float,
                    t: int) -> Tuple[StartDetector, bool]:
    fired = d.update(theta, sample_loss_theta, sample_loss_ema, t)
    return d, fired


class AsgdState:
    """Sparse averaged SGD.

    Averaging weights are uniform after the start step ``t0``:
    ``eta_t = 1/(t - t0)``, so ``avg_theta_t`` is the mean of
    ``theta_{t0+1} .. theta_t``.  Until ``t0`` is known the start detector
    runs (O(dim) per step); with ``t0`` given it is bypassed.
    """

    def __init__(self, dim: int, schedule: Schedule, lam: float = 0.0,
                 loss: LossKind = LossKind.SQUARED, theta0=None, t0: Optional[int] = None,
                 warmup: int = 50, decay: float = 0.99):
        if lam < 0:
            raise ContractError("lambda must be nonnegative")
        self.dim = int(dim)
        self.schedule = schedule
        self.lam = float(lam)
        self.loss = LossKind.parse(loss)
        self.u = np.zeros(self.dim) if theta0 is None else np.array(theta0, dtype=np.float64)
        if self.u.shape != (self.dim,):
            raise StructuralError("theta0 has the wrong length")
        self.u_hat = np.zeros(self.dim)
        self.alpha = 1.0
        self.beta = 1.0
        self.tau = 0.0
        self.t = 0
        if t0 is not None and t0 < 0:
            raise ContractError("t0 must be nonnegative")
        self.t0: Optional[int] = t0
        self.detector = StartDetector(self.u, decay=decay, warmup=warmup) if t0 is None else None
        self.anchors = 0

    @property
    def averaging(self) -> bool:
        return self.t0 is not None and self.t > self.t0

    @property
    def theta(self) -> np.ndarray:
        return self.u / self.alpha

    @property
    def theta_bar(self) -> np.ndarray:
        if not self.averaging:
            return self.theta
        return (self.tau * self.u + self.u_hat) / self.beta

    def step(self, sample: Sample) -> "AsgdState":
        x = sample.features
        _check_dim(sample, self.dim)
        y = sample.label
        t = self.t + 1
        gamma = self.schedule.rate(t)
        keep = _shrink(self.lam, gamma, t)
        s = dot(x, self.u) / self.alpha
        ls = loss_deriv(self.loss, s, y)
        detect = self.t0 is None
        pre = detect or t <= self.t0
        if detect:
            s_ema = dot(x, self.detector.theta_ema)
            loss_theta = loss_value(self.loss, s, y)
            loss_ema = loss_value(self.loss, s_ema, y)

        alpha = self.alpha / keep
        self.alpha = alpha
        scale = alpha * gamma * ls
        if not math.isfinite(scale):
            raise DivergenceError("ASGD step size overflowed", t)
        if pre:
            if ls != 0.0:
                axpy_sparse(-scale, x, self.u)
        else:
            eta = 1.0 / (t - self.t0)
            if ls != 0.0:
                axpy_sparse(-scale, x, self.u)
                if eta < 1.0:
                    axpy_sparse(self.tau * scale, x, self.u_hat)
            if eta < 1.0:
                self.beta = self.beta / (1.0 - eta)
                self.tau = self.tau + eta * self.beta / alpha
            else:
                # first averaged iterate: avg_theta = theta
                self.beta = 1.0
                self.tau = 1.0 / alpha
                if self.u_hat.any():
                    record_touches(self.dim)
                    self.u_hat[:] = 0.0
        self.t = t

        if not (math.isfinite(s) and math.isfinite(self.tau) and math.isfinite(self.beta)
                and np.isfinite(self.u[x.indices]).all()):
            raise DivergenceError("ASGD state became non-finite", t)

        if detect:
            record_touches(self.dim)
            if self.detector.update(self.u / alpha, loss_theta, loss_ema, t):
                self.t0 = t
        if self.alpha > ALPHA_LIMIT or self.beta > ANCHOR_LIMIT:
            self.re_anchor()
        return self

    def recover(self) -> Tuple[LinearModel, LinearModel]:
        return LinearModel(self.theta), LinearModel(self.theta_bar)

    def re_anchor(self) -> "AsgdState":
        """Rescale to ``alpha = beta = 1`` without changing the recovered pair."""
        record_touches(3 * self.dim)
        theta, theta_bar = self.theta, self.theta_bar
        self.u = theta
        self.alpha = 1.0
        if self.averaging:
            self.u_hat = theta_bar
            self.beta = 1.0
            self.tau = 0.0
        self.anchors += 1
        return self


def asgd_step(st: AsgdState, sample: Sample) -> AsgdState:
    """Advance ``st`` by one sample (in place) and return it."""
    return st.step(sample)


def recover(st: AsgdState) -> Tuple[LinearModel, LinearModel]:
    return st.recover()


def re_anchor(st: AsgdState) -> AsgdState:
    return st.re_anchor()


# -- driver -------------------------------------------------------------------

@dataclass
class TrainConfig:
    schedule: Schedule
    loss: LossKind = LossKind.SQUARED_HINGE
    lam: float = 0.0
    algorithm: str = "asgd"
    t0: Optional[int] = None
    warmup: int = 50
    decay: float = 0.99

    def __post_init__(self):
        self.loss = LossKind.parse(self.loss)
        if self.algorithm not in ("sgd", "asgd"):
            raise ContractError(f"algorithm must be 'sgd' or 'asgd', got {self.algorithm!r}")
        if self.lam < 0:
            raise ContractError("lambda must be nonnegative")


# evaluate(weights) -> (error_rate or None, cost, excess_risk or None)
Evaluator = Callable[[np.ndarray], Tuple[Optional[float], float, Optional[float]]]


@dataclass
class TrainResult:
    theta: LinearModel
    theta_bar: LinearModel
    records: List[MetricsRecord] = field(default_factory=list)
    t0: Optional[int] = None
    steps: int = 0


def geometric_checkpoints(n: int, points: int = 20) -> List[int]:
    """About ``points`` log-spaced steps in ``[1, n]``, always ending at ``n``."""
    if n < 1 or points < 1:
        return []
    if points == 1:
        return [n]
    steps = np.unique(np.round(np.geomspace(1, n, points)).astype(np.int64))
    return [int(s) for s in steps]


class Trainer:
    """Runs a trainer over one or more passes and collects metric rows."""

    def __init__(self, dim: int, config: TrainConfig, theta0=None, record_time: bool = True):
        self.config = config
        self.dim = int(dim)
        if config.algorithm == "sgd":
            self.state = SgdState(dim, config.schedule, config.lam, config.loss, theta0)
        else:
            self.state = AsgdState(dim, config.schedule, config.lam, config.loss, theta0,
                                   t0=config.t0, warmup=config.warmup, decay=config.decay)
        self.records: List[MetricsRecord] = []
        self.record_time = record_time
        self.elapsed = 0.0
        self.passes_done = 0

    def models(self) -> Dict[str, np.ndarray]:
        if isinstance(self.state, SgdState):
            return {"theta": self.state.theta}
        return {"theta": self.state.theta, "theta_bar": self.state.theta_bar}

    def _emit(self, evaluate: Optional[Evaluator], out: List[MetricsRecord]) -> None:
        for name, w in self.models().items():
            if evaluate is None:
                err, cost, excess = None, float("nan"), None
            else:
                err, cost, excess = evaluate(w)
            out.append(MetricsRecord(step=self.state.t, passes=float(self.passes_done),
                                     test_cost=cost, elapsed_seconds=self.elapsed if self.record_time else 0.0,
                                     test_error_rate=err, excess_risk=excess, model=name))

    def run_pass(self, samples: Iterable[Sample], checkpoints: Sequence[int] = (),
                 evaluate: Optional[Evaluator] = None, final_record: bool = True) -> List[MetricsRecord]:
        pending = sorted(c for c in set(checkpoints) if c > self.state.t)
        start = self.state.t
        new: List[MetricsRecord] = []
        k = 0
        clock = time.perf_counter()
        step = self.state.step
        for sample in samples:
            step(sample)
            if k < len(pending) and self.state.t == pending[k]:
                self.elapsed += time.perf_counter() - clock
                self._emit(evaluate, new)
                k += 1
                clock = time.perf_counter()
        self.elapsed += time.perf_counter() - clock
        n = self.state.t - start
        if n == 0:
            raise ContractError("empty sample stream")
        if final_record and (not new or new[-1].step != self.state.t):
            self._emit(evaluate, new)
        for r in new:
            r.passes = self.passes_done + (r.step - start) / n
        self.passes_done += 1
        self.records.extend(new)
        return new

    def result(self) -> TrainResult:
        st = self.state
        if isinstance(st, SgdState):
            theta = st.recover()
            return TrainResult(theta, LinearModel(theta.weights.copy()), list(self.records), None, st.t)
        theta, theta_bar = st.recover()
        return TrainResult(theta, theta_bar, list(self.records), st.t0, st.t)


def train_one_pass(samples: Iterable[Sample], dim: int, config: TrainConfig,
                   checkpoints: Sequence[int] = (), evaluate: Optional[Evaluator] = None,
                   theta0=None, record_time: bool = True) -> TrainResult:
    """Consume every sample once, in order; return final models and metric rows.

    Rows are emitted at each step in ``checkpoints`` (one per model) and once
    more at the end of the stream.
    """
    trainer = Trainer(dim, config, theta0=theta0, record_time=record_time)
    trainer.run_pass(samples, checkpoints, evaluate)
    return trainer.result()
