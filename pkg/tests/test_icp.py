import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scpo.icp import (CalibrationScores, IcpModel, calibrate,
                      calibration_quantile, coverage, prediction_set)

from oracles import brute_force_set

ALPHAS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


def _model(alphas, eps, scorer=None):
    return IcpModel(scorer, CalibrationScores(alphas), eps)


def test_worked_example():
    s = prediction_set(_model(ALPHAS, 0.2), [0.95, 0.15, 0.05])
    assert s.tolist() == [True, False, False]


def test_tiny_epsilon_gives_full_sets():
    rng = np.random.default_rng(0)
    s = prediction_set(_model(ALPHAS, 0.09), rng.normal(-5, 1, size=(50, 4)))
    assert s.all()


def test_extreme_epsilon_needs_top_alpha():
    scores = [0.95, 0.9, 0.89, 0.5]
    s = prediction_set(_model(ALPHAS, 0.999), scores)
    assert s.tolist() == [True, True, False, False]
    assert s.tolist() == [i in brute_force_set(ALPHAS, scores, 999, 1000)
                          for i in range(4)]


def test_decimal_epsilon_boundary():
    # 0.3 * 10 must be treated as exactly 3: count + 1 > 3 needs count >= 3
    s = prediction_set(_model(ALPHAS, 0.3), [0.25, 0.3])
    assert s.tolist() == [False, True]


class TestQuantile:
    def test_known_quantiles(self):
        cal = CalibrationScores(ALPHAS)
        assert calibration_quantile(cal, 0.2) == 0.1
        assert calibration_quantile(cal, 0.5) == 0.4
        assert calibration_quantile(cal, 0.05) == -math.inf

    def test_unsorted_input(self):
        cal = CalibrationScores([0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.4, 0.6, 0.8])
        np.testing.assert_array_equal(cal.sorted_alphas, ALPHAS)
        assert calibration_quantile(cal, 0.5) == 0.4

    def test_sentinel_admits_everything(self):
        cal = CalibrationScores(ALPHAS)
        q = calibration_quantile(cal, 0.05)
        assert all(s > q for s in [-1e300, 0.0, 5.0])

    def test_empty_calibration(self):
        with pytest.raises(ValueError):
            CalibrationScores([])


class TestCoverage:
    def test_full_and_empty(self):
        y = np.array([0, 1, 2])
        assert coverage(np.ones((3, 3), bool), y) == 1.0
        assert coverage(np.zeros((3, 3), bool), y) == 0.0

    def test_direct_count(self):
        sets = np.array([[1, 0, 0], [1, 1, 0], [0, 0, 1]], bool)
        assert coverage(sets, np.array([0, 2, 2])) == pytest.approx(2 / 3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            coverage(np.ones((3, 2), bool), np.array([0, 1]))


def test_epsilon_range():
    with pytest.raises(ValueError):
        _model(ALPHAS, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 40), st.integers(1, 99), st.integers(0, 2 ** 32 - 1),
       st.floats(0.01, 100))
def test_monotone_in_epsilon(n, e1, seed, scale):
    rng = np.random.default_rng(seed)
    alphas = rng.normal(size=n)
    scores = rng.normal(size=(20, 5))
    e2 = rng.integers(e1, 100)
    big = prediction_set(_model(alphas, e1 / 100), scores)
    small = prediction_set(_model(alphas, e2 / 100), scores)
    assert not (small & ~big).any()


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.integers(1, 50), st.integers(0, 2 ** 32 - 1),
       st.sampled_from([0.1, 3.0, 100.0, 1e-3]))
def test_scale_invariance(n, e, seed, c):
    rng = np.random.default_rng(seed)
    alphas = rng.normal(size=n)
    scores = rng.normal(size=(20, 4))
    a = prediction_set(_model(alphas, e / 51), scores)
    b = prediction_set(_model(c * alphas, e / 51), c * scores)
    np.testing.assert_array_equal(a, b)


def test_matches_brute_force_with_ties():
    rng = np.random.default_rng(7)
    for _ in range(300):
        n = int(rng.integers(5, 30))
        alphas = rng.integers(0, 6, n) / 5.0  # coarse grid forces ties
        scores = rng.integers(0, 6, 6) / 5.0
        k = int(rng.integers(1, 51))
        got = prediction_set(_model(alphas, k / 100), scores)
        ref = brute_force_set(alphas.tolist(), scores.tolist(), k, 100)
        assert set(np.flatnonzero(got)) == ref


def test_calibrate_and_predict():
    theta = np.eye(2)
    scorer = lambda X: np.asarray(X) @ theta
    X = np.array([[0.1, 0.0], [0.2, 0.0], [0.3, 0.0]])
    icp = calibrate(scorer, X, np.array([0, 0, 0]), 0.5)
    np.testing.assert_array_equal(icp.calibration.sorted_alphas, [0.1, 0.2, 0.3])
    assert icp.predict([[0.25, 0.05]]).tolist() == [[True, False]]
