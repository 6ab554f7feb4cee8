import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asgd.core import ContractError, DivergenceError, Sample, SparseVector, StructuralError
from asgd.losses import LossKind
from asgd.schedule import Schedule
from asgd.theory import (GaussianNoise, LinearSaConfig, mean_and_stderr, random_spd, replicate_errors,
                         replicate_rngs, run_linear_sa, theorem1_case, verify_theorem1)
from asgd.trainers import SgdState


def cfg1(theta0=1.0, gamma=0.5, noise=0.0, b=0.0):
    return LinearSaConfig(np.eye(1), [b], GaussianNoise([[noise]]), [theta0], Schedule(gamma))


class TestRun:
    def test_halving(self):
        tr = run_linear_sa(cfg1(), 30)
        np.testing.assert_array_equal(tr.thetas[:, 0], 2.0 ** -np.arange(31))

    def test_running_mean(self):
        tr = run_linear_sa(cfg1(noise=1.0), 50)
        for t in (1, 7, 50):
            np.testing.assert_allclose(tr.theta_bars[t], tr.thetas[1:t + 1].mean(axis=0), rtol=1e-13)

    def test_fixed_point(self, rng):
        A = random_spd(4, rng, 10.0)
        star = rng.standard_normal(4)
        cfg = LinearSaConfig(A, A @ star, GaussianNoise(np.zeros((4, 4))), star, Schedule(0.5, 0.1, 0.7))
        tr = run_linear_sa(cfg, 200)
        np.testing.assert_allclose(tr.thetas, np.tile(star, (201, 1)), atol=1e-13)

    def test_divergence(self):
        with pytest.raises(DivergenceError) as exc:
            run_linear_sa(cfg1(gamma=3.0), 5000)
        assert exc.value.step > 100

    def test_bad_steps(self):
        with pytest.raises(ContractError):
            run_linear_sa(cfg1(), 0)

    @pytest.mark.parametrize("kw", [dict(A=[[1.0, 0.5], [0.0, 1.0]]), dict(A=[[1.0, 0], [0, -1.0]])])
    def test_config_contracts(self, kw):
        with pytest.raises(ContractError):
            LinearSaConfig(kw["A"], np.zeros(2), GaussianNoise(np.eye(2)), np.zeros(2), Schedule(0.1))

    def test_noise_dim_mismatch(self):
        with pytest.raises(StructuralError):
            LinearSaConfig(np.eye(2), np.zeros(2), GaussianNoise(np.eye(3)), np.zeros(2), Schedule(0.1))

    def test_noise_covariance(self):
        S = np.array([[2.0, 0.5], [0.5, 1.0]])
        xi = GaussianNoise(S).sample(np.random.default_rng(0), 200_000)
        np.testing.assert_allclose(np.cov(xi.T), S, atol=0.02)

    def test_replicates_match_single_runs(self):
        cfg = theorem1_case(5, d=4, cond=20.0)
        errs = replicate_errors(cfg, 3, [10, 1500])
        star = cfg.theta_star
        for i, rng in enumerate(replicate_rngs(cfg.seed, 3)):
            tr = run_linear_sa(cfg, 1500, rng=rng)
            for row, t in enumerate((10, 1500)):
                e = tr.theta_bars[t] - star
                assert errs[row, i] == pytest.approx(t * e @ cfg.A @ e, rel=1e-10)

    @pytest.mark.parametrize("d", [1, 3, 5])
    def test_agrees_with_trainer_on_regression_stream(self, d):
        """Least-squares SGD is linear SA with state-dependent noise built from the samples."""
        rng = np.random.default_rng(d)
        A = random_spd(d, rng, 5.0)
        star = rng.standard_normal(d)
        L = np.linalg.cholesky(A)
        X = rng.standard_normal((100, d)) @ L.T
        y = X @ star + rng.standard_normal(100)
        sched = Schedule(0.3, 0.2, 0.6)
        cfg = LinearSaConfig(A, A @ star, GaussianNoise(np.eye(d)), np.zeros(d), sched)
        inn = lambda t, th: (np.outer(X[t - 1], X[t - 1]) - A) @ th - (X[t - 1] * y[t - 1] - A @ star)
        tr = run_linear_sa(cfg, 100, innovations=inn)
        sgd = SgdState(d, sched, 0.0, LossKind.SQUARED)
        for t in range(100):
            sgd.step(Sample(SparseVector(np.arange(d), X[t], d), float(y[t])))
            np.testing.assert_allclose(sgd.theta, tr.thetas[t + 1], rtol=1e-12, atol=1e-12)


class TestVerify:
    def test_zero_noise_is_exactly_zero(self):
        cfg = theorem1_case(0, d=3, noise_scale=0.0)
        cfg.b = np.zeros(3)
        rep = verify_theorem1(cfg, 3, [10, 100])
        assert rep.passed and all(r.estimate == 0.0 for r in rep.rows)

    def test_reproducible(self):
        a = verify_theorem1(theorem1_case(2, d=4), 20, [50, 300]).to_dict()
        b = verify_theorem1(theorem1_case(2, d=4), 20, [50, 300]).to_dict()
        assert a == b

    def test_inadmissible(self):
        cfg = theorem1_case(0, d=3, schedule=Schedule(10.0, 0.0, 0.5))
        with pytest.raises(ContractError, match="gamma0"):
            verify_theorem1(cfg, 5, [10])

    def test_constant_step_estimate_approaches_leading_term_from_below(self):
        rng = np.random.default_rng(3)
        A = random_spd(4, rng, 10.0)
        b = rng.standard_normal(4)
        cfg = LinearSaConfig(A, b, GaussianNoise(np.eye(4)), np.linalg.solve(A, b), Schedule(0.5), seed=1)
        rep = verify_theorem1(cfg, 400, [5000])
        lead = np.trace(np.linalg.inv(A))
        r = rep.rows[0]
        assert r.bound == pytest.approx(lead, rel=1e-12)
        assert 0.8 * lead < r.estimate <= lead + 3 * r.stderr

    def test_report_json(self):
        import json
        d = verify_theorem1(theorem1_case(1, d=2), 5, [20]).to_dict()
        assert json.loads(json.dumps(d))["rows"][0]["t"] == 20


class TestHelpers:
    @given(st.integers(1, 12), st.floats(1.0, 1e3), st.integers(0, 2 ** 31))
    @settings(max_examples=30, deadline=None)
    def test_random_spd_spectrum(self, d, cond, seed):
        A = random_spd(d, np.random.default_rng(seed), cond)
        ev = np.linalg.eigvalsh(A)
        assert np.allclose(A, A.T, atol=0)
        assert ev[0] == pytest.approx(1.0 / cond if d > 1 else ev[0], rel=1e-9)
        assert ev[-1] == pytest.approx(1.0, rel=1e-9) or d == 1
        assert ev[-1] / ev[0] <= cond * (1 + 1e-9)

    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=50), st.randoms())
    def test_mean_order_independent(self, xs, rnd):
        ys = list(xs)
        rnd.shuffle(ys)
        assert mean_and_stderr(np.array(xs))[0] == mean_and_stderr(np.array(ys))[0]

    def test_seeds_independent_of_count(self):
        a = [r.standard_normal() for r in replicate_rngs(9, 3)]
        b = [r.standard_normal() for r in replicate_rngs(9, 10)][:3]
        assert a == b
