"""Synthetic classification data for tests, demos and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .data import Dataset


def gaussian_classes(n: int, rng: np.random.Generator, n_classes: int = 3,
                     n_features: int = 2, spread: float = 1.5) -> Dataset:
    """Isotropic unit-variance Gaussian clouds with means on a circle."""
    y = rng.integers(0, n_classes, n)
    angles = 2 * np.pi * np.arange(n_classes) / n_classes
    centers = np.zeros((n_classes, n_features))
    centers[:, 0] = spread * np.cos(angles)
    centers[:, 1 % n_features] += spread * np.sin(angles)
    X = centers[y] + rng.standard_normal((n, n_features))
    return Dataset(X, y, tuple(f"c{i}" for i in range(n_classes)),
                   tuple(f"x{j}" for j in range(n_features)))


def crossed_stripes(n: int, rng: np.random.Generator, narrow: float = 0.5,
                    wide: float = 2.0, offset: float = 1.5) -> Dataset:
    """Two classes whose noise is large along different axes.

    Class ``a`` is a vertical stripe at the origin, class ``b`` a horizontal
    stripe centered at ``(offset, offset)``. The posterior log-odds are
    quadratic, so the regions where each label is plausible are bounded by
    non-parallel lines; a logistic model can only give parallel ones.
    """
    y = rng.integers(0, 2, n)
    sd = np.array([[narrow, wide], [wide, narrow]])
    mean = np.array([[0.0, 0.0], [offset, offset]])
    X = mean[y] + sd[y] * rng.standard_normal((n, 2))
    return Dataset(X, y, ("a", "b"), ("x0", "x1"))
