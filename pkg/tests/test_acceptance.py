"""End-to-end acceptance criteria AC-1 ... AC-9, each with its runtime budget."""
import time

import numpy as np
import pytest
from conftest import dense_oracle, rel_err, report_acceptance

from asgd.cli import resolve_schedule
from asgd.core import Sample, SparseVector, count_touches
from asgd.datagen import write_synthetic_libsvm
from asgd.evaluation import TestSet
from asgd.ingest import LibsvmSource
from asgd.losses import LossKind, loss_deriv, loss_value
from asgd.schedule import Schedule
from asgd.theory import (divergence_check, make_quadratic_toy, make_regression_toy, psd_sandwich_check,
                         random_sandwich_case, run_arms, sandwich_margins, theorem1_case, toy1_arms,
                         toy2_arms, verify_theorem1, xi2_bound_check)
from asgd.trainers import AsgdState, TrainConfig, train_one_pass

pytestmark = pytest.mark.acceptance


def test_ac1_bound_holds_in_monte_carlo():
    start = time.perf_counter()
    lines = []
    ok = True
    for seed in range(5):
        cfg = theorem1_case(seed, d=10, cond=100.0)
        rep = verify_theorem1(cfg, 200, [100, 1000, 10_000])
        ok &= rep.passed
        lines += [f"t={r.t}:{r.estimate:.3g}<={r.bound:.3g}" for r in rep.rows]
    elapsed = time.perf_counter() - start
    ok &= elapsed <= 60
    report_acceptance("AC-1", ok, f"5 problems x 200 seeds, {elapsed:.1f}s; seed0 " + " ".join(lines[:3]))
    assert ok


def test_ac2_sandwich_is_psd():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    cases = [random_sandwich_case(rng, max_dim=8, max_t=500) for _ in range(20)]
    margins = [sandwich_margins(*c) for c in cases]
    worst = min(min(m) for m in margins)
    elapsed = time.perf_counter() - start
    ok = all(psd_sandwich_check(*c) for c in cases) and worst >= -1e-10 and elapsed <= 10
    report_acceptance("AC-2", ok, f"20 cases, min eigenvalue {worst:.3g}, {elapsed:.2f}s")
    assert ok


def _fast_stream(rng, n, dim, nnz, loss):
    out = []
    for _ in range(n):
        idx = np.unique(rng.integers(0, dim, nnz))
        val = rng.standard_normal(idx.size) / np.sqrt(idx.size)
        y = float(rng.standard_normal()) if loss is LossKind.SQUARED else float(rng.choice([-1.0, 1.0]))
        out.append(Sample(SparseVector(idx, val, dim), y))
    return out


def test_ac3_sparse_matches_dense():
    start = time.perf_counter()
    dim, steps = 10_000, 10_000
    worst = 0.0
    touch_ratio = 0.0
    for k in range(10):
        rng = np.random.default_rng(300 + k)
        lam = 0.0 if k % 2 == 0 else 1e-3
        loss = LossKind.SQUARED if k % 4 < 2 else LossKind.LOGISTIC
        schedule = Schedule(0.5, 0.01, 0.75)
        t0 = int(rng.integers(0, 200))
        samples = _fast_stream(rng, steps, dim, 20, loss)
        forced = set(rng.choice(np.arange(t0 + 1, steps), size=5, replace=False).tolist())
        st = AsgdState(dim, schedule, lam, loss, t0=t0)
        step_touches = 0
        for t, x in enumerate(samples, 1):
            with count_touches() as c:
                st.step(x)
            if t > t0:
                step_touches += c.count
            if t in forced:
                st.re_anchor()
        thetas, bars = dense_oracle(samples, dim, schedule, lam, loss, t0)
        worst = max(worst, rel_err(st.theta, thetas[-1]), rel_err(st.theta_bar, bars[-1]))
        nnz = sum(x.features.nnz for x in samples[t0:])
        touch_ratio = max(touch_ratio, step_touches / nnz)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and touch_ratio <= 4.0 and elapsed <= 30
    report_acceptance("AC-3", ok, f"max rel err {worst:.2e}, touches/nnz {touch_ratio:.2f}, {elapsed:.1f}s")
    assert ok


def test_ac4_toy1_ordering():
    start = time.perf_counter()
    p = make_quadratic_toy()
    res = run_arms(p, toy1_arms(p), [10_000], seeds=10, base_seed=0)
    e = {a: res.final_mean(a) for a in ("asgd", "asgd_bad", "sgd", "batch")}
    elapsed = time.perf_counter() - start
    ok = (e["asgd"] <= 3 * e["batch"] and e["asgd_bad"] >= 10 * e["asgd"] and e["asgd"] < e["sgd"]
          and elapsed <= 60)
    report_acceptance("AC-4", ok, " ".join(f"{k}={v:.3g}" for k, v in e.items()) + f", {elapsed:.1f}s")
    assert ok


def test_ac5_toy2_ordering():
    start = time.perf_counter()
    p = make_regression_toy()
    res = run_arms(p, toy2_arms(p), [100_000], seeds=10, base_seed=0)
    e = {a: res.final_mean(a) for a in ("asgd", "sgd", "batch")}
    elapsed = time.perf_counter() - start
    ok = e["sgd"] >= 10 * e["asgd"] and e["asgd"] <= 2 * e["batch"] and elapsed <= 120
    report_acceptance("AC-5", ok, " ".join(f"{k}={v:.3g}" for k, v in e.items()) + f", {elapsed:.1f}s")
    assert ok


def test_ac6_divergence_threshold():
    start = time.perf_counter()
    M = 4.0
    hi = [divergence_check(M, 2.4 / M, 100_000, seed=s, threshold=1e6) for s in range(5)]
    lo = [divergence_check(M, 0.5 / M, 100_000, seed=s, threshold=1e6) for s in range(5)]
    elapsed = time.perf_counter() - start
    ok = (all(r.diverged for r in hi) and all(r.max_norm < 1e3 for r in lo) and elapsed <= 20)
    report_acceptance("AC-6", ok, f"diverged by step {max(r.steps_run for r in hi)}, "
                                  f"bounded max norm {max(r.max_norm for r in lo):.3g}, {elapsed:.1f}s")
    assert ok


def test_ac7_noise_moment_bound():
    start = time.perf_counter()
    p = make_regression_toy()
    rng = np.random.default_rng(7)
    thetas = [p.theta_star + rng.standard_normal(p.dim) * rng.uniform(0.1, 3.0) for _ in range(20)]
    rep = xi2_bound_check(p, thetas, draws=100_000, seed=7)
    elapsed = time.perf_counter() - start
    ok = rep.passed and len(rep.rows) == 20 and elapsed <= 60
    report_acceptance("AC-7", ok, f"max estimate/bound {max(r.ratio for r in rep.rows):.3g}, {elapsed:.1f}s")
    assert ok


def test_ac8_finite_differences():
    start = time.perf_counter()
    h = 1e-5
    worst = 0.0
    rng = np.random.default_rng(8)
    for kind in (LossKind.SQUARED, LossKind.SQUARED_HINGE, LossKind.LOGISTIC):
        checked = 0
        while checked < 1000:
            s = float(rng.uniform(-5, 5))
            y = float(rng.choice([-1.0, 1.0])) if kind.is_classification else float(rng.normal())
            if kind is LossKind.SQUARED_HINGE and abs(1 - y * s) < 1e-4:
                continue
            fd = (loss_value(kind, s + h, y) - loss_value(kind, s - h, y)) / (2 * h)
            worst = max(worst, abs(fd - loss_deriv(kind, s, y)))
            checked += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed <= 1
    report_acceptance("AC-8", ok, f"max |fd - deriv| {worst:.2e}, {elapsed:.2f}s")
    assert ok


@pytest.fixture(scope="module")
def libsvm_pair(tmp_path_factory):
    d = tmp_path_factory.mktemp("ac9")
    train = write_synthetic_libsvm(d / "train.svm", 100_000, dim=1000, nnz=20, seed=1, model_seed=9)
    test = write_synthetic_libsvm(d / "test.svm", 20_000, dim=1000, nnz=20, seed=2, model_seed=9)
    return train, test


def test_ac9_one_pass_averaging_beats_sgd(libsvm_pair):
    start = time.perf_counter()
    train_path, test_path = libsvm_pair
    loss, lam = LossKind.SQUARED_HINGE, 1e-5
    src = LibsvmSource(train_path)
    samples = src.load()
    dim, M = src.meta.dim, src.meta.M_hat
    labels = {s.label for s in samples}
    test = TestSet(LibsvmSource(test_path, dim=dim).load(), dim, loss, lam)
    errs = {"asgd": [], "sgd": []}
    for order in range(5):
        perm = np.random.default_rng(order).permutation(len(samples))
        stream = [samples[i] for i in perm]
        for alg in errs:
            cfg = TrainConfig(resolve_schedule("auto", alg, loss, lam, M), loss, lam, alg)
            res = train_one_pass(stream, dim, cfg, evaluate=test, record_time=False)
            final = [r for r in res.records if r.model == ("theta_bar" if alg == "asgd" else "theta")][-1]
            errs[alg].append(final.test_error_rate)
    mean = {k: float(np.mean(v)) for k, v in errs.items()}
    elapsed = time.perf_counter() - start
    ok = len(samples) >= 100_000 and labels == {-1.0, 1.0} and mean["asgd"] <= mean["sgd"]
    report_acceptance("AC-9", ok, f"test error avg theta {mean['asgd']:.4f} vs SGD theta {mean['sgd']:.4f}, "
                                  f"{elapsed:.1f}s")
    assert ok
