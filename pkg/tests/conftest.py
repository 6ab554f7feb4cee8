import numpy as np
import pytest

from asgd.core import Sample, SparseVector
from asgd.losses import LossKind, loss_deriv


def random_stream(rng, n, dim, nnz, loss=LossKind.SQUARED, scale=1.0):
    """Random sparse samples; labels are +-1 for classification losses."""
    out = []
    for _ in range(n):
        k = int(rng.integers(1, nnz + 1))
        idx = rng.choice(dim, size=k, replace=False)
        val = scale * rng.standard_normal(k) / np.sqrt(k)
        if loss is LossKind.SQUARED:
            y = float(rng.standard_normal())
        else:
            y = float(rng.choice([-1.0, 1.0]))
        out.append(Sample(SparseVector(idx, val, dim), y))
    return out


def dense_oracle(samples, dim, schedule, lam, loss, t0, theta0=None):
    """Plain dense recursion: shrink-then-step iterate, uniform mean after t0.

    Returns the lists of (theta_t, avg_theta_t) for t = 1..n.  The average
    is kept as an explicit sum divided by the count.
    """
    theta = np.zeros(dim) if theta0 is None else np.array(theta0, dtype=float)
    total = np.zeros(dim)
    count = 0
    thetas, bars = [], []
    for t, s in enumerate(samples, 1):
        x = s.features.to_dense(dim)
        g = schedule.rate(t)
        d = loss_deriv(loss, float(theta @ x), s.label)
        theta = (1 - lam * g) * theta - g * d * x
        if t > t0:
            total += theta
            count += 1
        thetas.append(theta.copy())
        bars.append(total / count if count else theta.copy())
    return thetas, bars


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one "AC-n PASS|FAIL detail" line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def report_acceptance(name, passed, detail=""):
    line = f"{name} {'PASS' if passed else 'FAIL'} {detail}".rstrip()
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0].split("-")[1])):
            terminalreporter.write_line(line)
