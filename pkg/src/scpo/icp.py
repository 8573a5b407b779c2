"""Inductive conformal prediction for classification.

Prediction sets are boolean masks of shape ``(n, C)``. A label ``y`` enters
the set for a test row when

    #{calibration alphas a : score[y] >= a} + 1 > epsilon * (n_cal + 1)

which is the canonical (count) inclusion rule. The quantile form, keeping
labels with ``score > q``, is available through :func:`calibration_quantile`
but can differ from the count rule by one rank at ties and boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

Scorer = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CalibrationScores:
    alphas: np.ndarray

    def __post_init__(self):
        a = np.array(self.alphas, dtype=float).ravel()
        if a.size == 0:
            raise ValueError("calibration set is empty")
        if not np.all(np.isfinite(a)):
            raise ValueError("calibration scores must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)
        s = np.sort(a)
        s.setflags(write=False)
        object.__setattr__(self, "_sorted", s)

    @property
    def sorted_alphas(self) -> np.ndarray:
        return self._sorted

    def __len__(self):
        return self.alphas.size

    @classmethod
    def from_scores(cls, scores: np.ndarray, labels: np.ndarray):
        """Pick each row's score at its true label."""
        labels = np.asarray(labels)
        return cls(scores[np.arange(labels.size), labels])


@dataclass(frozen=True)
class IcpModel:
    scorer: Scorer
    calibration: CalibrationScores
    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    def with_epsilon(self, epsilon: float) -> "IcpModel":
        return IcpModel(self.scorer, self.calibration, epsilon)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return prediction_set(self, self.scorer(np.asarray(X, dtype=float)))


def calibrate(scorer: Scorer, X: np.ndarray, y: np.ndarray,
              epsilon: float) -> IcpModel:
    return IcpModel(scorer, CalibrationScores.from_scores(scorer(X), y),
                    epsilon)


def inclusion_counts(calib: CalibrationScores, scores: np.ndarray) -> np.ndarray:
    """Number of calibration alphas each score is >= to."""
    return np.searchsorted(calib.sorted_alphas, scores, side="right")


def min_inclusion_count(epsilon: float, n_calib: int) -> int:
    """Smallest count satisfying ``count + 1 > epsilon * (n_calib + 1)``.

    Evaluated in exact rational arithmetic on the shortest decimal form of
    epsilon, so that e.g. 0.3 * 10 is exactly 3.
    """
    return math.floor(Fraction(repr(float(epsilon))) * (n_calib + 1))


def prediction_set(model: IcpModel, scores: np.ndarray) -> np.ndarray:
    """Boolean prediction-set mask for one score row or a batch of rows."""
    scores = np.asarray(scores, dtype=float)
    counts = inclusion_counts(model.calibration, scores)
    return counts >= min_inclusion_count(model.epsilon, len(model.calibration))


def calibration_quantile(calib: CalibrationScores, epsilon: float) -> float:
    """Threshold ``q`` for the ``score > q`` form of the prediction set.

    Returns ``-inf`` when the rank ``floor(epsilon * (n + 1)) - 1`` is below 1,
    i.e. every label is admitted.
    """
    j = min_inclusion_count(epsilon, len(calib)) - 1
    if j < 1:
        return -math.inf
    return float(calib.sorted_alphas[j - 1])


def coverage(sets: np.ndarray, labels: np.ndarray) -> float:
    sets = np.asarray(sets, dtype=bool)
    labels = np.asarray(labels)
    if sets.shape[0] != labels.shape[0]:
        raise ValueError(
            f"{sets.shape[0]} prediction sets but {labels.shape[0]} labels")
    if labels.size == 0:
        raise ValueError("no prediction sets given")
    return float(sets[np.arange(labels.size), labels].mean())


def set_sizes(sets: np.ndarray) -> np.ndarray:
    return np.asarray(sets, dtype=bool).sum(axis=-1)
