"""Gradient descent on the surrogate loss and hyperparameter grid search."""

from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .conformity import LinearConformity, unflatten_theta
from .icp import calibrate, coverage
from .metrics import IDENTITY, InefficiencyMeasure, inefficiency
from .surrogate import Hyperparams, evaluate, normalize_transform, transform_loss

logger = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (10.0, 100.0, 500.0, 1000.0, 5000.0, 10000.0)
DEFAULT_GAMMAS = (1.0, 2.0, 5.0, 10.0)
DEFAULT_ETAS = (1.0, 10.0, 100.0, 1000.0)

STOP_WINDOW = 10
JOBS_ENV_VAR = "SCPO_JOBS"


@dataclass
class DescentResult:
    theta: np.ndarray
    trace: np.ndarray  # transformed loss before each step, plus the final one
    n_iter: int
    diverged: bool
    converged: bool

    @property
    def final_loss(self) -> float:
        return float(self.trace[-1]) if self.trace.size else math.nan


def gradient_descent(X: np.ndarray, y: np.ndarray, hp: Hyperparams,
                     ineff: InefficiencyMeasure = IDENTITY,
                     n_classes: int | None = None,
                     theta0: np.ndarray | None = None) -> DescentResult:
    """Fixed-step gradient descent on the transformed surrogate loss.

    Starts from the zero matrix unless ``theta0`` is given. Stops after
    ``hp.max_iters`` steps, or once the transformed loss changed by less than
    ``hp.rel_tol`` (relative) over the last ``STOP_WINDOW`` steps. A
    non-finite loss, gradient or score ends the run with ``diverged=True``
    and the last finite parameters.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    m = X.shape[1]
    theta = np.zeros((m, n_classes)) if theta0 is None else \
        np.array(theta0, dtype=float)
    trace = []
    diverged = converged = False
    it = 0
    while True:
        with np.errstate(all="ignore"):
            ev = evaluate(theta, X, y, hp, ineff)
            try:
                value, grad = transform_loss(ev.loss, ev.gradient, hp.transform)
            except ValueError:
                value, grad = math.nan, ev.gradient
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            diverged = True
            break
        trace.append(value)
        if it >= STOP_WINDOW:
            ref = trace[-1 - STOP_WINDOW]
            if abs(value - ref) <= hp.rel_tol * max(abs(ref), 1e-300):
                converged = True
                break
        if it >= hp.max_iters:
            break
        with np.errstate(all="ignore"):
            new_theta = theta - hp.eta * unflatten_theta(grad, m)
            # finite parameters can still overflow the scores
            finite = np.all(np.isfinite(new_theta)) and \
                np.all(np.isfinite(X @ new_theta))
        if not finite:
            diverged = True
            break
        theta = new_theta
        it += 1
    return DescentResult(theta, np.asarray(trace), it, diverged, converged)


def training_icp_score(theta: np.ndarray, X: np.ndarray, y: np.ndarray,
                       epsilon: float,
                       ineff: InefficiencyMeasure = IDENTITY):
    """Inefficiency and coverage of an ICP calibrated and tested on ``X``.

    The result is optimistic and not a valid coverage estimate; it only
    ranks candidate hyperparameters.
    """
    icp = calibrate(LinearConformity(theta), X, y, epsilon)
    sets = icp.predict(X)
    return inefficiency(sets, ineff), coverage(sets, y)


@dataclass(frozen=True)
class GridSpec:
    lambdas: Sequence[float] = DEFAULT_LAMBDAS
    gammas: Sequence[float] = DEFAULT_GAMMAS
    etas: Sequence[float] = DEFAULT_ETAS
    transform: str = "neg_inverse"
    epsilon: float = 0.1
    ineff: InefficiencyMeasure = IDENTITY
    max_iters: int = 2000
    rel_tol: float = 1e-7

    def __post_init__(self):
        for name in ("lambdas", "gammas", "etas"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ValueError(f"{name} must be non-empty")
            if any(not v > 0 for v in values):
                raise ValueError(f"{name} must be positive")
            object.__setattr__(self, name, values)
        object.__setattr__(self, "transform", normalize_transform(self.transform))

    def cells(self) -> list[Hyperparams]:
        return [Hyperparams(epsilon=self.epsilon, lam=lam, gamma=gamma,
                            eta=eta, transform=self.transform,
                            max_iters=self.max_iters, rel_tol=self.rel_tol)
                for lam, gamma, eta in itertools.product(
                    self.lambdas, self.gammas, self.etas)]


@dataclass
class TrainedCandidate:
    theta: np.ndarray
    hp: Hyperparams
    final_loss: float
    train_icp_ineff: float
    train_icp_acc: float
    diverged: bool
    n_iter: int = 0
    trace: np.ndarray | None = field(default=None, repr=False)

    def sort_key(self):
        return (self.train_icp_ineff, self.hp.lam, self.hp.gamma, self.hp.eta)

    CSV_FIELDS = ("lambda", "gamma", "eta", "transform", "final_loss",
                  "train_ineff", "train_acc", "diverged", "n_iter")

    def csv_row(self) -> dict:
        return {
            "lambda": repr(self.hp.lam),
            "gamma": repr(self.hp.gamma),
            "eta": repr(self.hp.eta),
            "transform": self.hp.transform,
            "final_loss": repr(self.final_loss),
            "train_ineff": repr(self.train_icp_ineff),
            "train_acc": repr(self.train_icp_acc),
            "diverged": str(int(self.diverged)),
            "n_iter": str(self.n_iter),
        }


def train_candidate(X, y, hp: Hyperparams, ineff: InefficiencyMeasure = IDENTITY,
                    n_classes: int | None = None) -> TrainedCandidate:
    """Run descent for one grid cell and score it with a training ICP."""
    res = gradient_descent(X, y, hp, ineff, n_classes=n_classes)
    if res.diverged:
        return TrainedCandidate(res.theta, hp, math.nan, math.nan, math.nan,
                                True, res.n_iter, res.trace)
    ineff_value, acc = training_icp_score(res.theta, X, y, hp.epsilon, ineff)
    return TrainedCandidate(res.theta, hp, res.final_loss, ineff_value, acc,
                            False, res.n_iter, res.trace)


def _train_cell(args):
    return train_candidate(*args)


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV_VAR, "1")))
    except ValueError:
        return 1


def run_grid(X, y, grid: GridSpec, n_classes: int | None = None,
             jobs: int | None = None) -> list[TrainedCandidate]:
    """Train every grid cell; results come back in grid order."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    jobs = default_jobs() if jobs is None else jobs
    tasks = [(X, y, hp, grid.ineff, n_classes) for hp in grid.cells()]
    if jobs <= 1 or len(tasks) == 1:
        results = [_train_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_cell, tasks))
    n_div = sum(c.diverged for c in results)
    if n_div:
        logger.info("%d of %d grid cells diverged", n_div, len(results))
    return results


def select_best(candidates: Sequence[TrainedCandidate]) -> TrainedCandidate:
    """Lowest training-ICP inefficiency; ties go to smaller lambda, gamma, eta."""
    ok = [c for c in candidates if not c.diverged]
    if not ok:
        raise FloatingPointError("every grid cell diverged")
    return min(ok, key=TrainedCandidate.sort_key)


def grid_search(X, y, grid: GridSpec, n_classes: int | None = None,
                jobs: int | None = None) -> TrainedCandidate:
    return select_best(run_grid(X, y, grid, n_classes=n_classes, jobs=jobs))


