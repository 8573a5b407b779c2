"""Differentiable surrogate of ICP inefficiency for the linear CM.

Indicators ``I[a > 0]`` in the ICP objective are replaced by the increasing
sigmoid ``1 / (1 + exp(-gamma * a))``. With threshold ``q`` fixed, for
training rows ``i`` with labels ``y_i``:

    s_i = sum_y sigmoid(gamma * (A(x_i, y) - q))          soft set size
    V   = mean_i sigmoid(gamma * (A(x_i, y_i) - q)) - (1 - epsilon)
    L   = mean_i f(s_i) + lambda * V**2

Everything is computed in batched matrix form; see :func:`evaluate`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .conformity import flatten_theta
from .metrics import IDENTITY, InefficiencyMeasure

TRANSFORMS = ("identity", "log", "neg_inverse", "neg_inverse_square")


def normalize_transform(kind: str) -> str:
    """Accept CLI spellings such as ``neg-inverse``."""
    kind = kind.replace("-", "_")
    if kind not in TRANSFORMS:
        raise ValueError(
            f"unknown loss transform {kind!r}; choose from {TRANSFORMS}")
    return kind


@dataclass(frozen=True)
class Hyperparams:
    epsilon: float = 0.1
    lam: float = 100.0
    gamma: float = 2.0
    eta: float = 10.0
    transform: str = "neg_inverse"
    q: float = 1.0
    max_iters: int = 2000
    rel_tol: float = 1e-7

    def __post_init__(self):
        object.__setattr__(self, "transform", normalize_transform(self.transform))
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.eta >= 0:
            raise ValueError("eta must be non-negative")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if not self.rel_tol >= 0:
            raise ValueError("rel_tol must be non-negative")


@dataclass
class SurrogateEval:
    loss: float
    soft_sizes: np.ndarray
    validity_gap: float
    gradient: np.ndarray  # flat, column-major over the (m, C) parameters


def sigmoid(a, gamma: float = 1.0):
    """Increasing logistic ``1 / (1 + exp(-gamma * a))``; never overflows."""
    return expit(gamma * np.asarray(a, dtype=float))


def evaluate(theta: np.ndarray, X: np.ndarray, y: np.ndarray, hp: Hyperparams,
             ineff: InefficiencyMeasure = IDENTITY) -> SurrogateEval:
    """Surrogate loss, soft sizes, validity gap and exact gradient.

    Parameters
    ----------
    theta : ndarray of shape (m, C)
    X : ndarray of shape (k, m)
        Training features (normalized, with intercept column if used).
    y : ndarray of shape (k,)
        Training labels in ``0 .. C-1``.
    hp : Hyperparams
        Only ``epsilon``, ``lam``, ``gamma`` and ``q`` are used here.
    ineff : InefficiencyMeasure
    """
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    k, m = X.shape
    if k == 0:
        raise ValueError("training set is empty")
    if theta.ndim != 2 or theta.shape[0] != m:
        raise ValueError(
            f"theta has shape {theta.shape}, expected ({m}, C)")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta has non-finite entries")
    rows = np.arange(k)

    A = X @ theta
    sig = sigmoid(A - hp.q, hp.gamma)
    S = sig.sum(axis=1)
    sig_alpha = sig[rows, y]
    V = sig_alpha.mean() - (1.0 - hp.epsilon)
    loss = float(np.mean(ineff.f(S)) + hp.lam * V ** 2)

    # dL/dA: the soft-size term touches every label, the validity term only
    # the true label of each row
    dA = (ineff.f_prime(S)[:, None] * hp.gamma * sig * (1.0 - sig)) / k
    dA[rows, y] += 2.0 * hp.lam * V * hp.gamma * sig_alpha * (1.0 - sig_alpha) / k
    grad = X.T @ dA

    return SurrogateEval(loss, S, float(V), flatten_theta(grad))


def transform_loss(loss: float, gradient: np.ndarray, kind: str):
    """Apply an increasing transform to the loss and chain its gradient."""
    kind = normalize_transform(kind)
    gradient = np.asarray(gradient, dtype=float)
    if kind == "identity":
        return loss, gradient
    if not loss > 0:
        raise ValueError(f"transform {kind!r} needs a positive loss, got {loss}")
    if kind == "log":
        return float(np.log(loss)), gradient / loss
    if kind == "neg_inverse":
        return -1.0 / loss, gradient / loss ** 2
    return -1.0 / loss ** 2, 2.0 * gradient / loss ** 3
