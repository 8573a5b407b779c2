"""Conformity measures: the multiclass linear CM and the probability CM.

A conformity scorer maps an ``(n, m)`` feature matrix to an ``(n, C)`` matrix
of scores, entry ``[i, y]`` being the conformity of label ``y`` for row ``i``.

The linear CM is parameterized by an ``(m, C)`` matrix ``T`` whose column
``y`` holds the coefficients for label ``y``. Flattening is column-major, so
flat index ``j = a + m * y`` addresses row ``a`` of column ``y``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import softmax


def flatten_theta(theta: np.ndarray) -> np.ndarray:
    return np.asarray(theta, dtype=float).ravel(order="F")


def unflatten_theta(flat: np.ndarray, n_features: int) -> np.ndarray:
    flat = np.asarray(flat, dtype=float)
    if flat.size % n_features:
        raise ValueError(
            f"{flat.size} parameters do not split into columns of {n_features}")
    return flat.reshape((n_features, -1), order="F")


def _check_dims(theta: np.ndarray, X: np.ndarray):
    if X.shape[-1] != theta.shape[0]:
        raise ValueError(
            f"feature dimension {X.shape[-1]} does not match parameter rows "
            f"{theta.shape[0]}")


def linear_scores(theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Scores ``A(x, y) = theta[:, y] . x``.

    ``X`` may be a single row of length m (returns length C) or an ``(n, m)``
    batch (returns ``(n, C)``).
    """
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    _check_dims(theta, X)
    return X @ theta


def linear_score_grad(theta: np.ndarray, x: np.ndarray, y: int) -> np.ndarray:
    """Gradient of ``A(x, y)`` with respect to the flattened parameters.

    Independent of ``theta`` apart from its shape: the only nonzeros are
    ``x`` placed in the block of column ``y``.
    """
    theta = np.asarray(theta)
    x = np.asarray(x, dtype=float)
    _check_dims(theta, x)
    m, n_classes = theta.shape
    if not 0 <= y < n_classes:
        raise ValueError(f"label {y} out of range 0..{n_classes - 1}")
    grad = np.zeros(m * n_classes)
    grad[m * y:m * (y + 1)] = x
    return grad


def prob_scores(model, X: np.ndarray) -> np.ndarray:
    """Class probabilities of a multinomial model, used as conformity scores.

    ``model`` is anything with an ``(m, C)`` ``weights`` attribute, normally a
    :class:`scpo.baseline.ProbModel`.
    """
    W = np.asarray(model.weights, dtype=float)
    X = np.asarray(X, dtype=float)
    _check_dims(W, X)
    return softmax(X @ W, axis=-1)


class LinearConformity:
    """Callable scorer wrapping a fixed parameter matrix."""

    def __init__(self, theta):
        self.theta = np.asarray(theta, dtype=float)

    def __call__(self, X):
        return linear_scores(self.theta, X)


class ProbConformity:
    def __init__(self, model):
        self.model = model

    def __call__(self, X):
        return prob_scores(self.model, X)
