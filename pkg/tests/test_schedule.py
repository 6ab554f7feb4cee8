import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asgd.core import ContractError
from asgd.losses import LossKind
from asgd.schedule import BoundParams, Schedule, c0, rate, recommended_schedule, theorem1_bound


def mp_c0(lam0, a, c, g0):
    lam0, a, c, g0 = map(mpmath.mpf, (lam0, a, c, g0))
    return a * c * (1 + a * c * g0) / (lam0 - max(0, 2 * c - 1) * a)


def mp_bound(lam0, a, c, g0, tr, d0, t):
    k = mp_c0(lam0, a, c, g0)
    a, c, g0, tr, d0, t = map(mpmath.mpf, (a, c, g0, tr, d0, t))
    return tr + (2 * k + k * k) * (1 + a * g0 * t) ** (c - 1) / c * tr + (1 + k) ** 2 / (g0 ** 2 * t) * d0


class TestRate:
    def test_t0_is_gamma0(self):
        assert Schedule(0.3, 2.0, 0.5).rate(0) == 0.3

    def test_constant_when_a_zero(self):
        s = Schedule(0.7, 0.0, 0.9)
        assert all(s.rate(t) == 0.7 for t in (1, 10, 10 ** 6))

    def test_decay_example(self):
        # 2^(-2/3), high-precision reference
        assert rate(Schedule(1.0, 0.02, 2 / 3), 50) == pytest.approx(0.629960524947436582, rel=1e-14)

    def test_inverse_time_form(self):
        s = Schedule(0.5, 0.1, 1.0)
        assert s.rate(40) == pytest.approx(0.5 / (1 + 0.5 * 0.1 * 40), rel=1e-15)

    def test_vectorised(self):
        s = Schedule(1.0, 0.5, 0.75)
        ts = np.arange(0, 20)
        np.testing.assert_array_equal(s.rate(ts), [s.rate(int(t)) for t in ts])

    @given(st.floats(1e-3, 10), st.floats(0, 10), st.floats(0, 1), st.integers(0, 10 ** 7))
    def test_nonincreasing(self, g0, a, c, t):
        s = Schedule(g0, a, c)
        assert s.rate(t + 1) <= s.rate(t)

    @pytest.mark.parametrize("args", [(0, 0, 0), (-1, 0, 0), (1, -0.1, 0.5), (1, 0, 1.5), (1, 0, -0.1),
                                      (float("nan"), 0, 0)])
    def test_invalid(self, args):
        with pytest.raises(ContractError):
            Schedule(*args)

    def test_parse_and_dict_round_trip(self):
        s = Schedule.parse("0.25, 1e-5, 0.75")
        assert s == Schedule(0.25, 1e-5, 0.75)
        assert Schedule.from_dict(s.to_dict()) == s
        with pytest.raises(ContractError):
            Schedule.parse("1,2")


class TestRecommended:
    @pytest.mark.parametrize("loss,M,lam,expected", [
        (LossKind.SQUARED, 1.0, 0.01, (1.0, 0.01, 2 / 3)),
        (LossKind.LOGISTIC, 4.0, 1e-5, (0.25, 1e-5, 0.75)),
        (LossKind.SQUARED_HINGE, 6.8, 1e-6, (0.147058823529411765, 1e-6, 0.75)),
        ("hinge", 2.0, 1e-3, (0.5, 1e-3, 0.75)),
    ])
    def test_values(self, loss, M, lam, expected):
        s = recommended_schedule(loss, M, lam)
        assert (s.gamma0, s.a, s.c) == pytest.approx(expected, rel=1e-15)

    @pytest.mark.parametrize("M,lam", [(0, 1), (1, 0), (-1, 1)])
    def test_invalid(self, M, lam):
        with pytest.raises(ContractError):
            recommended_schedule("squared", M, lam)


def params(lam0=1.0, lam1=1.0, tr=1.0, d0=1.0, s=Schedule(1.0, 1.0, 0.5)):
    return BoundParams(lam0, lam1, tr, d0, s)


class TestC0:
    def test_zero_when_a_zero(self):
        assert c0(params(s=Schedule(1.0, 0.0, 0.7))) == 0.0

    def test_zero_when_c_zero(self):
        assert c0(params(s=Schedule(1.0, 0.5, 0.0))) == 0.0

    def test_example(self):
        # a = lambda0 = 0.02, c = 2/3, gamma0 = 1: exactly 1 + a*c*gamma0 = 76/75
        p = BoundParams(0.02, 1.0, 1.0, 0.0, Schedule(1.0, 0.02, 2 / 3))
        assert c0(p) == pytest.approx(1.013333333333333333, rel=1e-13)
        assert c0(p) == pytest.approx(float(mp_c0(0.02, 0.02, mpmath.mpf(2) / 3, 1)), rel=1e-13)

    @given(st.floats(0.01, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 1))
    def test_matches_high_precision(self, lam0, frac, c, u):
        a = frac * lam0 / max(2 * c - 1, 1e-3) * 0.99
        s = Schedule(u / 1.0, a, c)
        p = BoundParams(lam0, 1.0, 0.0, 0.0, s)
        assert c0(p) == pytest.approx(float(mp_c0(lam0, a, c, s.gamma0)), rel=1e-12, abs=1e-300)
        assert c0(p) >= 0
        assert (c0(p) == 0) == (a * c == 0)


class TestAdmissibility:
    def test_gamma_too_large(self):
        with pytest.raises(ContractError, match="gamma0"):
            BoundParams(0.1, 2.0, 1.0, 0.0, Schedule(1.0, 0.0, 0.5))

    def test_decay_too_fast(self):
        with pytest.raises(ContractError, match="lambda0"):
            BoundParams(0.1, 1.0, 1.0, 0.0, Schedule(1.0, 0.2, 1.0))

    def test_unchecked_path_and_c0_recheck(self):
        p = BoundParams(0.1, 1.0, 1.0, 0.0, Schedule(1.0, 0.2, 1.0), check=False)
        assert not p.admissible
        assert len(p.violations()) == 1
        with pytest.raises(ContractError):
            c0(p)

    def test_boundary_equality_allowed(self):
        assert not BoundParams(0.02, 1.0, 1.0, 0.0, Schedule(1.0, 0.02, 1.0), check=False).admissible
        assert BoundParams(0.02, 1.0, 1.0, 0.0, Schedule(1.0, 0.02, 0.5)).admissible
        assert BoundParams(0.02, 1.0, 1.0, 0.0, Schedule(1.0, 0.02, 2 / 3)).admissible

    def test_kappa(self):
        p = BoundParams(0.02, 1.0, 1.0, 0.0, Schedule(1.0, 0.02, 2 / 3))
        assert p.kappa == pytest.approx(2 / 3)
        assert 0 < p.kappa <= 1

    @pytest.mark.parametrize("bad", [dict(lam0=0), dict(lam0=2, lam1=1), dict(tr=-1), dict(d0=-1)])
    def test_field_contracts(self, bad):
        kw = dict(lam0=1.0, lam1=1.0, tr=1.0, d0=1.0)
        kw.update(bad)
        with pytest.raises(ContractError):
            params(**kw)


class TestTheorem1Bound:
    def test_trivial_case(self):
        p = BoundParams(0.5, 1.0, 2.5, 0.0, Schedule(1.0, 0.0, 0.5))
        assert theorem1_bound(p, 17) == 2.5

    def test_example(self):
        assert theorem1_bound(params(), 100) == pytest.approx(1.441077840961620518, rel=1e-13)

    @given(st.floats(0.05, 1), st.floats(0, 0.99), st.floats(0.01, 1), st.floats(0, 5), st.floats(0, 5),
           st.integers(1, 10 ** 6))
    def test_matches_high_precision(self, lam0, frac, c, tr, d0, t):
        a = frac * lam0 / max(2 * c - 1, 0.5)
        s = Schedule(1.0, a, c)
        p = BoundParams(lam0, 1.0, tr, d0, s)
        ref = mp_bound(lam0, a, c, 1.0, tr, d0, t)
        assert theorem1_bound(p, t) == pytest.approx(float(ref), rel=1e-12, abs=1e-300)

    def test_limit_is_leading_term(self):
        p = BoundParams(0.02, 1.0, 3.0, 4.0, Schedule(1.0, 0.02, 0.5))
        assert theorem1_bound(p, 10 ** 9) == pytest.approx(3.0, rel=1e-3)

    def test_decreasing_late(self):
        p = BoundParams(0.02, 1.0, 3.0, 4.0, Schedule(1.0, 0.02, 2 / 3))
        vals = theorem1_bound(p, np.geomspace(1e3, 1e9, 30))
        assert np.all(np.diff(vals) < 0) and vals[-1] > 3.0

    def test_rejects_c_zero_and_t_zero(self):
        with pytest.raises(ContractError):
            theorem1_bound(BoundParams(1.0, 1.0, 1.0, 1.0, Schedule(1.0, 0.0, 0.0)), 10)
        with pytest.raises(ContractError):
            theorem1_bound(params(), 0)
