import numpy as np
import pytest

from scpo.baseline import ProbModel, baseline_icp, train_multinomial
from scpo.icp import calibration_quantile, coverage
from scpo.synthetic import gaussian_classes

from oracles import binary_logistic


def _with_intercept(X):
    return np.column_stack([X, np.ones(len(X))])


def test_intercept_only_reproduces_frequencies():
    y = np.array([0] * 30 + [1] * 50 + [2] * 20)
    X = _with_intercept(np.zeros((100, 2)))
    model = train_multinomial(X, y, tol=1e-10)
    p = model.predict_proba(X[:1])[0]
    np.testing.assert_allclose(p, [0.3, 0.5, 0.2], atol=1e-6)


def test_separable_hits_iteration_cap():
    X = _with_intercept(np.array([[-2.0], [-1.0], [1.0], [2.0]]))
    y = np.array([0, 0, 1, 1])
    model = train_multinomial(X, y, max_iters=300, tol=0.0)
    assert model.n_iter == 300 and not model.converged
    p = model.predict_proba(X)
    assert p[0, 0] > 0.99 and p[3, 1] > 0.99
    assert np.all(np.isfinite(model.weights))


def test_two_class_equals_binary_logistic():
    rng = np.random.default_rng(0)
    ds = gaussian_classes(200, rng, n_classes=2, spread=0.8)
    X = _with_intercept(ds.features)
    model = train_multinomial(X, ds.labels, tol=1e-9, max_iters=50000)
    # last column pinned at zero, so column 0 holds the log-odds of class 0
    w = binary_logistic(X.tolist(), (ds.labels == 0).astype(int).tolist())
    np.testing.assert_allclose(model.weights[:, 0], w, atol=1e-4)
    np.testing.assert_array_equal(model.weights[:, 1], 0.0)


def test_loglik_non_decreasing():
    rng = np.random.default_rng(1)
    ds = gaussian_classes(150, rng)
    X = _with_intercept(ds.features)
    nll = [train_multinomial(X, ds.labels, max_iters=it).final_nll
           for it in (0, 1, 2, 5, 10, 50, 200)]
    assert all(b <= a + 1e-12 for a, b in zip(nll, nll[1:]))


def test_absent_class_rejected():
    with pytest.raises(ValueError, match="absent"):
        train_multinomial(np.ones((4, 1)), np.array([0, 0, 2, 2]))


def test_gauge_invariance():
    rng = np.random.default_rng(2)
    W, X = rng.normal(size=(3, 4)), rng.normal(size=(10, 3))
    shift = rng.normal(size=(3, 1))
    np.testing.assert_allclose(ProbModel(W).predict_proba(X),
                               ProbModel(W + shift).predict_proba(X), atol=1e-12)


class TestBaselineIcp:
    def test_uniform_model_all_or_nothing(self):
        X = np.ones((9, 2))
        y = np.arange(9) % 3
        icp = baseline_icp(ProbModel(np.zeros((2, 3))), X, y, 0.5)
        np.testing.assert_allclose(icp.calibration.alphas, 1 / 3)
        sets = icp.predict(np.ones((5, 2)))
        assert sets.all()
        # a score tied with every alpha counts all n, which passes for any epsilon
        assert icp.with_epsilon(0.95).predict(np.ones((5, 2))).all()

    def test_quantile_on_known_alphas(self):
        # probabilities of the true label can be set through one logit column
        t = np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
        X = _with_intercept(np.log(t / (1 - t))[:, None])
        W = np.array([[1.0, 0.0], [0.0, 0.0]])
        icp = baseline_icp(ProbModel(W), X, np.zeros(9, int), 0.2)
        np.testing.assert_allclose(icp.calibration.sorted_alphas, t, atol=1e-12)
        assert calibration_quantile(icp.calibration, 0.2) == pytest.approx(0.1)
        assert calibration_quantile(icp.calibration, 0.5) == pytest.approx(0.4)

    def test_coverage_on_separated_data(self):
        rng = np.random.default_rng(3)
        n = 2000
        tr, ca, te = (gaussian_classes(k, rng, n_classes=2, spread=3.0)
                      for k in (300, 500, n))
        model = train_multinomial(_with_intercept(tr.features), tr.labels)
        icp = baseline_icp(model, _with_intercept(ca.features), ca.labels, 0.05)
        cov = coverage(icp.predict(_with_intercept(te.features)), te.labels)
        assert cov >= 0.95 - 3 * np.sqrt(0.95 * 0.05 / n)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            baseline_icp(ProbModel(np.zeros((2, 3))), np.ones((4, 3)),
                         np.zeros(4, int), 0.1)
