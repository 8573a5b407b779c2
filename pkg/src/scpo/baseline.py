"""Multinomial logistic regression used as the baseline conformity measure."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from .conformity import ProbConformity
from .icp import IcpModel, calibrate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProbModel:
    """Fitted weights, shape ``(m, C)``; the last column is pinned to zero."""

    weights: np.ndarray
    n_iter: int = 0
    final_nll: float = float("nan")
    converged: bool = False

    def predict_proba(self, X):
        return softmax(np.asarray(X, dtype=float) @ self.weights, axis=-1)


def _mean_loglik(W, X, y):
    return float(log_softmax(X @ W, axis=1)[np.arange(y.size), y].mean())


def _gradient(W, X, Y):
    # gradient of the mean log-likelihood, gauge column zeroed
    G = X.T @ (Y - softmax(X @ W, axis=1)) / X.shape[0]
    G[:, -1] = 0.0
    return G


def train_multinomial(X: np.ndarray, y: np.ndarray, n_classes: int | None = None,
                      max_iters: int = 5000, tol: float = 1e-7,
                      step: float = 1.0) -> ProbModel:
    """Maximum-likelihood multinomial logistic regression.

    Full-batch gradient ascent on the mean log-likelihood. A step that does
    not increase the likelihood is halved until it does; accepted steps grow
    the step size by a factor of two. Stops when the gradient max-norm drops
    to ``tol`` or after ``max_iters`` iterations. No regularization, so on
    separable data the weights keep growing until the iteration cap.

    The returned ``ProbModel.final_nll`` is the total (not mean) negative
    log-likelihood.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValueError("training set is empty")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    counts = np.bincount(y, minlength=n_classes)
    if (counts == 0).any():
        raise ValueError(
            f"classes absent from training data: {np.flatnonzero(counts == 0)}")

    Y = np.eye(n_classes)[y]
    W = np.zeros((X.shape[1], n_classes))
    ll = _mean_loglik(W, X, y)
    G = _gradient(W, X, Y)
    it = 0
    converged = np.max(np.abs(G)) <= tol
    while not converged and it < max_iters:
        W_new = W + step * G
        ll_new = _mean_loglik(W_new, X, y)
        while ll_new < ll and step > 1e-20:
            step /= 2.0
            W_new = W + step * G
            ll_new = _mean_loglik(W_new, X, y)
        if ll_new < ll:
            logger.debug("line search stalled at iteration %d", it)
            break
        W, ll = W_new, ll_new
        G = _gradient(W, X, Y)
        step *= 2.0
        it += 1
        converged = np.max(np.abs(G)) <= tol
    return ProbModel(W, n_iter=it, final_nll=-ll * X.shape[0],
                     converged=bool(converged))


def baseline_icp(model: ProbModel, X_calib: np.ndarray, y_calib: np.ndarray,
                 epsilon: float) -> IcpModel:
    """ICP whose conformity score is the predicted probability of a label."""
    X_calib = np.asarray(X_calib, dtype=float)
    if X_calib.ndim != 2 or X_calib.shape[1] != model.weights.shape[0]:
        raise ValueError("calibration features do not match the model")
    return calibrate(ProbConformity(model), X_calib, y_calib, epsilon)
