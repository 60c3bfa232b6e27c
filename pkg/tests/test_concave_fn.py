"""Piecewise-linear concave functions: evaluation, restriction, sampling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sconcave.concave_fn import DomainError, PiecewiseConcave, sample_random


def tent():
    return PiecewiseConcave(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 0.0]))


class TestConstruction:
    def test_rejects_nonconcave(self):
        with pytest.raises(ValueError, match="not concave"):
            PiecewiseConcave(np.array([0.0, 1.0, 2.0]), np.array([0.0, -1.0, 0.5]))

    def test_rejects_tied_knots(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            PiecewiseConcave(np.array([0.0, 0.0, 1.0]), np.array([0.0, 1.0, 0.0]))

    def test_from_points_merges_ties_with_max(self):
        phi = PiecewiseConcave.from_points([0.0, 1.0, 1.0, 2.0], [0.0, 0.3, 1.0, 0.0])
        assert phi.knots.size == 3
        assert phi.eval(1.0) == 1.0

    def test_single_knot(self):
        phi = PiecewiseConcave(np.array([0.5]), np.array([2.0]))
        assert phi.eval(0.5) == 2.0
        assert phi.eval(0.6) == -math.inf


class TestEval:
    def test_interpolation_and_outside(self):
        flat = PiecewiseConcave(np.array([0.0, 1.0]), np.array([0.0, 0.0]))
        assert flat.eval(0.5) == 0.0
        assert flat.eval(2.0) == -math.inf
        assert tent().eval(1.5) == pytest.approx(0.5)

    def test_endpoints_attained(self):
        phi = tent()
        assert phi.eval(0.0) == 0.0
        assert phi.eval(2.0) == 0.0


class TestRestrictDomain:
    def test_tent_left_half(self):
        res = tent().restrict_domain((0.0, 1.0))
        assert res.domain == (0.0, 1.0)
        assert res.eval(0.5) == pytest.approx(0.5)

    def test_superset_is_identity(self):
        res = tent().restrict_domain((-5.0, 5.0))
        np.testing.assert_array_equal(res.knots, tent().knots)

    def test_interpolated_endpoints(self):
        lin = PiecewiseConcave(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        res = lin.restrict_domain((0.25, 0.75))
        np.testing.assert_allclose(res.knots, [0.25, 0.75])
        np.testing.assert_allclose(res.values, [0.25, 0.75])

    def test_empty_intersection(self):
        with pytest.raises(DomainError):
            tent().restrict_domain((5.0, 6.0))

    def test_agrees_with_masked_eval(self):
        phi = sample_random(0.0, 1.0, 1.0, 9, 3)
        res = phi.restrict_domain((0.2, 0.7))
        xs = np.linspace(0.0, 1.0, 200)
        for x in xs:
            if 0.2 <= x <= 0.7:
                assert res.eval(float(x)) == pytest.approx(phi.eval(float(x)), abs=1e-12)
            else:
                assert res.eval(float(x)) == -math.inf


class TestSuperlevel:
    def test_tent_levels(self):
        assert tent().superlevel_set(0.5) == pytest.approx((0.5, 1.5))
        assert tent().superlevel_set(2.0) is None
        assert tent().superlevel_set(-10.0) == (0.0, 2.0)

    def test_monotone_shrinking(self):
        phi = sample_random(0.0, 1.0, 1.0, 10, 17)
        levels = np.linspace(-1.0, 1.0, 15)
        prev = None
        for y in levels:
            cur = phi.superlevel_set(float(y))
            if prev is not None and cur is not None:
                assert cur[0] >= prev[0] - 1e-12
                assert cur[1] <= prev[1] + 1e-12
            if cur is None:
                break
            prev = cur


class TestRestrictRange:
    def test_tent_above_half(self):
        res = tent().restrict_range(0.5, math.inf)
        assert res.domain == pytest.approx((0.5, 1.5))
        assert min(res.values) >= 0.5 - 1e-12

    def test_clip_above(self):
        res = tent().restrict_range(-1e9, 0.5)
        assert res.max_value() == pytest.approx(0.5)
        # plateau inserted exactly at the crossings
        assert 0.5 in res.knots and 1.5 in res.knots

    def test_compose_superlevel_and_clip(self):
        lin = PiecewiseConcave(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        res = lin.restrict_range(0.25, 0.75)
        assert res.domain == pytest.approx((0.25, 1.0))
        xs = np.linspace(0.25, 1.0, 50)
        expected = np.minimum(xs, 0.75)
        np.testing.assert_allclose(res.eval(xs), expected, atol=1e-12)

    def test_empty_superlevel_raises(self):
        with pytest.raises(DomainError):
            tent().restrict_range(2.5)


class TestSampleRandom:
    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=150, deadline=None)
    def test_invariants(self, seed):
        phi = sample_random(-1.0, 2.0, 1.5, 8, seed)
        assert phi.knots[0] == -1.0 and phi.knots[-1] == 2.0
        assert np.max(np.abs(phi.values)) <= 1.5
        slopes = phi.slopes
        assert np.all(np.diff(slopes) <= 1e-12 * max(1.0, np.max(np.abs(slopes))))

    def test_deterministic(self):
        a = sample_random(0.0, 1.0, 1.0, 8, 42)
        b = sample_random(0.0, 1.0, 1.0, 8, 42)
        np.testing.assert_array_equal(a.knots, b.knots)
        np.testing.assert_array_equal(a.values, b.values)

    def test_many_seeds_stay_bounded(self):
        worst = max(np.max(np.abs(sample_random(0.0, 1.0, 1.0, 7, s).values))
                    for s in range(1000))
        assert worst <= 1.0

    def test_bad_arguments(self):
        with pytest.raises(DomainError):
            sample_random(1.0, 0.0, 1.0, 5, 0)
        with pytest.raises(DomainError):
            sample_random(0.0, 1.0, -1.0, 5, 0)


class TestOperationOutputsConcave:
    @given(seed=st.integers(0, 3000), y=st.floats(-0.9, 0.9))
    @settings(max_examples=100, deadline=None)
    def test_restrict_range_keeps_concavity(self, seed, y):
        phi = sample_random(0.0, 1.0, 1.0, 9, seed)
        if phi.max_value() <= y:
            return
        res = phi.restrict_range(y, 0.5 * (y + phi.max_value()))
        slopes = res.slopes
        if slopes.size >= 2:
            assert np.all(np.diff(slopes) <= 1e-12 * max(1.0, np.max(np.abs(slopes))))


class TestSerialization:
    def test_json_round_trip(self):
        phi = tent()
        back = PiecewiseConcave.from_dict(phi.to_dict())
        np.testing.assert_array_equal(back.knots, phi.knots)
        np.testing.assert_array_equal(back.values, phi.values)
