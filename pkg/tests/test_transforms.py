"""Transform evaluation, inversion, assumption probes, and generalized means."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sconcave.transforms import (Transform, TransformDomainError, check_assumptions,
                                 check_s_concavity, generalized_mean, nesting_check,
                                 sqrt_transform)


def finite_difference(f, y, h=1e-7):
    return (f(y + h) - f(y - h)) / (2 * h)


class TestEval:
    def test_log_concave_at_zero(self):
        assert Transform.log_concave().eval(0.0) == 1.0

    def test_negative_power(self):
        assert Transform.power(-0.5).eval(-2.0) == pytest.approx(0.25, rel=1e-14)

    def test_positive_power(self):
        assert Transform.power(0.5).eval(4.0) == pytest.approx(16.0, rel=1e-14)

    def test_extended_values(self):
        t = Transform.power(-0.5)
        assert t.eval(-math.inf) == 0.0
        assert t.eval(0.0) == math.inf
        assert t.eval(5.0) == math.inf
        tp = Transform.power(2.0)
        assert tp.eval(-3.0) == 0.0
        assert tp.eval(math.inf) == math.inf

    def test_total_on_extended_reals(self):
        for t in (Transform.log_concave(), Transform.power(-0.5), Transform.power(2.0)):
            for y in (-math.inf, -1e300, -1.0, 0.0, 1.0, 1e300, math.inf):
                v = t.eval(y)
                assert v >= 0.0  # no exception, nonnegative extended value


class TestInverse:
    def test_values(self):
        t = Transform.power(-0.5)
        assert t.inverse(1.0) == pytest.approx(-1.0, rel=1e-14)
        assert t.inverse(0.25) == pytest.approx(-2.0, rel=1e-14)
        assert Transform.log_concave().inverse(math.e) == pytest.approx(1.0, rel=1e-14)

    def test_domain_error(self):
        with pytest.raises(TransformDomainError):
            Transform.power(-0.5).inverse(0.0)
        with pytest.raises(TransformDomainError):
            Transform.log_concave().inverse(-1.0)

    @pytest.mark.parametrize("t", [Transform.log_concave(), Transform.power(-0.5),
                                   Transform.power(-0.25), Transform.power(1.5)])
    def test_round_trip_grid(self, t):
        lo = t.y0_tilde if math.isfinite(t.y0_tilde) else -20.0
        hi = t.yinf_tilde if math.isfinite(t.yinf_tilde) else 20.0
        ys = np.linspace(lo + 1e-3, hi - 1e-3, 1000)
        for y in ys:
            u = t.eval(float(y))
            assert t.inverse(u) == pytest.approx(y, rel=1e-10, abs=1e-10)

    def test_inverse_nondecreasing(self):
        t = Transform.power(-0.5)
        us = np.geomspace(1e-6, 1e6, 200)
        ys = np.asarray([t.inverse(float(u)) for u in us])
        assert np.all(np.diff(ys) >= 0)


class TestDerivative:
    def test_values(self):
        assert Transform.log_concave().derivative(0.0) == pytest.approx(1.0)
        assert Transform.power(-1.0).derivative(-2.0) == pytest.approx(0.25)
        assert Transform.power(-0.5).derivative(-1.0) == pytest.approx(2.0)

    @pytest.mark.parametrize("t,y", [
        (Transform.log_concave(), 0.7),
        (Transform.power(-0.5), -1.3),
        (Transform.power(-0.25), -0.4),
        (Transform.power(2.0), 1.9),
    ])
    def test_matches_finite_differences(self, t, y):
        fd = finite_difference(lambda z: t.eval(z), y)
        assert t.derivative(y) == pytest.approx(fd, rel=1e-6)

    def test_domain_error(self):
        with pytest.raises(TransformDomainError):
            Transform.power(-0.5).derivative(1.0)


class TestSqrt:
    def test_power_index_doubles(self):
        g = sqrt_transform(Transform.power(-0.5))
        assert g.s == -1.0
        assert g.alpha == pytest.approx(1.0)
        g2 = Transform.power(-1.0 / 3.0).sqrt()
        assert g2.s == pytest.approx(-2.0 / 3.0)

    @pytest.mark.parametrize("t", [Transform.log_concave(), Transform.power(-0.5),
                                   Transform.power(0.5)])
    def test_square_identity_on_grid(self, t):
        g = t.sqrt()
        lo = t.y0_tilde if math.isfinite(t.y0_tilde) else -30.0
        hi = t.yinf_tilde if math.isfinite(t.yinf_tilde) else 30.0
        ys = np.linspace(lo + 1e-6, hi - 1e-6, 500)
        hv = np.asarray([t.eval(float(y)) for y in ys])
        gv = np.asarray([g.eval(float(y)) for y in ys])
        np.testing.assert_allclose(gv ** 2, hv, rtol=1e-10)


class TestAssumptions:
    def test_negative_half(self):
        rep = check_assumptions(Transform.power(-0.5))
        assert rep["T1"].status == "pass"
        assert rep["T3"].status == "pass"
        assert rep["T3"].witness == pytest.approx(2.0, abs=0.05)

    def test_log_concave(self):
        rep = check_assumptions(Transform.log_concave())
        assert rep["T1"].status == "pass"
        assert rep["T4"].status == "pass"
        assert rep["T2"].status == "vacuous"

    def test_super_linear_power_fails_t2(self):
        rep = check_assumptions(Transform.power(2.0))
        assert rep["T2"].status == "fail"
        assert check_assumptions(Transform.power(0.5))["T2"].status == "pass"

    def test_boundary_pole_fails_t3(self):
        # exact pole order 1 cannot satisfy the strict beta > 1 requirement
        rep = check_assumptions(Transform.power(-1.0))
        assert rep["T3"].status == "fail"


class TestGeneralizedMean:
    def test_arithmetic_geometric_min(self):
        assert generalized_mean(1.0, 2.0, 4.0, 0.5) == pytest.approx(3.0)
        assert generalized_mean(0.0, 1.0, 4.0, 0.5) == pytest.approx(2.0)
        assert generalized_mean(-math.inf, 2.0, 4.0, 0.3) == 2.0

    @given(a=st.floats(0.01, 50.0), b=st.floats(0.01, 50.0),
           theta=st.floats(0.05, 0.95))
    @settings(max_examples=200, deadline=None)
    def test_nondecreasing_in_s(self, a, b, theta):
        ss = [-8.0, -2.0, -0.5, 0.0, 0.5, 2.0, 8.0]
        vals = [generalized_mean(s, a, b, theta) for s in ss]
        assert all(v2 >= v1 - 1e-9 * max(1.0, v1)
                   for v1, v2 in zip(vals, vals[1:]))

    def test_zero_handling(self):
        assert generalized_mean(-0.5, 0.0, 3.0, 0.5) == 0.0


class TestSConcavity:
    def test_uniform_any_s(self):
        p = lambda x: 1.0 if 0.0 <= x <= 1.0 else 0.0
        grid = np.linspace(0.01, 0.99, 21)
        assert check_s_concavity(p, -0.5, grid)

    def test_gaussian_log_concave(self):
        p = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        assert check_s_concavity(p, 0.0, np.linspace(-3, 3, 25))

    def test_bimodal_mixture_fails(self):
        c = lambda x: 1.0 / (math.pi * (1.0 + x * x))
        p = lambda x: 0.5 * c(x - 5.0) + 0.5 * c(x + 5.0)
        assert not check_s_concavity(p, 0.0, np.linspace(-10, 10, 31))


class TestNesting:
    def test_gaussian_into_negative_class(self):
        p = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        assert nesting_check(p, -0.5, np.linspace(-4, 4, 101))

    def test_uniform(self):
        p = lambda x: 1.0 if 0.0 <= x <= 1.0 else 0.0
        with pytest.warns(UserWarning):
            assert nesting_check(p, -0.9, np.linspace(-0.5, 1.5, 41))

    def test_symmetric_pareto(self):
        p = lambda x: (1.0 + abs(x)) ** -3.0  # normalization is irrelevant here
        assert nesting_check(p, -0.5, np.linspace(-6, 6, 201))

    def test_bimodal_fails(self):
        c = lambda x: 1.0 / (math.pi * (1.0 + x * x))
        p = lambda x: 0.5 * c(x - 5.0) + 0.5 * c(x + 5.0)
        assert not nesting_check(p, -0.5, np.linspace(-10, 10, 101))


class TestMonotonicity:
    @pytest.mark.parametrize("t", [Transform.log_concave(), Transform.power(-0.5),
                                   Transform.power(0.5), Transform.power(-2.0)])
    def test_eval_nondecreasing(self, t):
        lo = t.y0_tilde if math.isfinite(t.y0_tilde) else -50.0
        hi = t.yinf_tilde if math.isfinite(t.yinf_tilde) else 50.0
        ys = np.linspace(lo + 1e-9, hi - 1e-9, 400)
        vals = np.asarray([t.eval(float(y)) for y in ys])
        assert np.all(np.diff(vals) >= -1e-12)
