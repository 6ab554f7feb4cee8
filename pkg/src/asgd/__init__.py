"""One-pass averaged stochastic gradient descent for sparse linear models."""
from .core import (AsgdError, ContractError, DataError, DivergenceError, LinearModel, MetricsRecord,
                   NumericError, ParseError, Sample, SparseVector, StepSizeError, StructuralError,
                   count_touches)
from .evaluation import TestSet
from .ingest import LibsvmSource, estimate_M, iter_libsvm, normalize_labels, parse_libsvm_line
from .losses import LossKind, loss_deriv, loss_value
from .schedule import BoundParams, Schedule, c0, recommended_schedule, theorem1_bound
from .trainers import (AsgdState, SgdState, StartDetector, TrainConfig, Trainer, TrainResult,
                       asgd_step, recover, re_anchor, sgd_step, train_one_pass)

__version__ = "0.1.0"

__all__ = [
    "AsgdError", "AsgdState", "BoundParams", "ContractError", "DataError", "DivergenceError",
    "LibsvmSource", "LinearModel", "LossKind", "MetricsRecord", "NumericError", "ParseError",
    "Sample", "Schedule", "SgdState", "SparseVector", "StartDetector", "StepSizeError",
    "StructuralError", "TestSet", "TrainConfig", "TrainResult", "Trainer", "asgd_step", "c0",
    "count_touches", "estimate_M", "iter_libsvm", "loss_deriv", "loss_value", "normalize_labels",
    "parse_libsvm_line", "re_anchor", "recommended_schedule", "recover", "sgd_step",
    "theorem1_bound", "train_one_pass",
]
