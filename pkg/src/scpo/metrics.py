"""Accuracy, inefficiency, paired comparison statistics and reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .icp import IcpModel, coverage, set_sizes


@dataclass(frozen=True)
class InefficiencyMeasure:
    """Cost of a prediction set as a function of its size.

    ``identity`` is the plain set size; ``log1p`` is ``log(size + 1)`` with
    the natural logarithm. Both accept real-valued (soft) sizes.
    """

    kind: str = "identity"

    def __post_init__(self):
        if self.kind not in ("identity", "log1p"):
            raise ValueError(f"unknown inefficiency measure {self.kind!r}")

    def f(self, w):
        w = np.asarray(w, dtype=float)
        return w if self.kind == "identity" else np.log1p(w)

    def f_prime(self, w):
        w = np.asarray(w, dtype=float)
        if self.kind == "identity":
            return np.ones_like(w)
        return 1.0 / (w + 1.0)


IDENTITY = InefficiencyMeasure("identity")
LOG1P = InefficiencyMeasure("log1p")


def get_measure(name: str) -> InefficiencyMeasure:
    """Look up a measure by CLI name (``identity`` or ``log``/``log1p``)."""
    if name in ("log", "log1p"):
        return LOG1P
    if name == "identity":
        return IDENTITY
    raise ValueError(f"unknown inefficiency measure {name!r}")


def inefficiency(sets: np.ndarray, measure: InefficiencyMeasure = IDENTITY) -> float:
    sets = np.asarray(sets, dtype=bool)
    if sets.shape[0] == 0:
        raise ValueError("no prediction sets given")
    return float(np.mean(measure.f(set_sizes(sets))))


def binomial_two_sided(k: int, n: int) -> float:
    """Exact two-sided sign test p-value for ``k`` successes out of ``n``.

    Twice the smaller tail under Binomial(n, 1/2), capped at 1.
    """
    if n == 0:
        return math.nan
    lo = min(k, n - k)
    tail = sum(math.comb(n, i) for i in range(lo + 1))
    return min(1.0, 2.0 * tail / 2 ** n)


def binomial_compare(sets_a: np.ndarray, sets_b: np.ndarray):
    """Paired sign test on prediction-set sizes.

    Returns ``(wins_a, wins_b, p_value)`` where ``wins_a`` counts rows where
    ``a`` gives the strictly smaller set. Ties are discarded; if every row is
    tied the p-value is NaN.
    """
    size_a, size_b = set_sizes(sets_a), set_sizes(sets_b)
    if size_a.shape != size_b.shape:
        raise ValueError("prediction set lists differ in length")
    wins_a = int(np.sum(size_a < size_b))
    wins_b = int(np.sum(size_b < size_a))
    return wins_a, wins_b, binomial_two_sided(wins_a, wins_a + wins_b)


@dataclass
class EvalReport:
    epsilon: float
    accuracy: float
    mean_ineff: float
    set_size_histogram: np.ndarray
    n_test: int
    measure: str = "identity"
    sets: np.ndarray | None = field(default=None, repr=False, compare=False)

    CSV_FIELDS = ("epsilon", "accuracy", "mean_ineff", "n_test", "measure",
                  "set_size_histogram")

    def csv_row(self) -> dict:
        return {
            "epsilon": repr(self.epsilon),
            "accuracy": repr(self.accuracy),
            "mean_ineff": repr(self.mean_ineff),
            "n_test": str(self.n_test),
            "measure": self.measure,
            "set_size_histogram": "|".join(map(str, self.set_size_histogram)),
        }


def evaluate_icp(model: IcpModel, X: np.ndarray, y: np.ndarray,
                 measure: InefficiencyMeasure = IDENTITY) -> EvalReport:
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("test set is empty")
    sets = model.predict(X)
    n_classes = sets.shape[1]
    hist = np.bincount(set_sizes(sets), minlength=n_classes + 1)
    return EvalReport(
        epsilon=model.epsilon,
        accuracy=coverage(sets, y),
        mean_ineff=inefficiency(sets, measure),
        set_size_histogram=hist,
        n_test=X.shape[0],
        measure=measure.kind,
        sets=sets,
    )


def change_in_inefficiency(scpo: float, baseline: float) -> float:
    """Percentage reduction of inefficiency relative to the baseline."""
    if not baseline > 0:
        raise ValueError("baseline inefficiency must be positive")
    return 100.0 * (1.0 - scpo / baseline)


@dataclass
class ResultRow:
    """One line of a results table comparing SCPO-ICP with the baseline."""

    dataset: str
    confidence: float
    lam: float
    gamma: float
    scpo: EvalReport
    baseline: EvalReport

    @property
    def change(self) -> float:
        return change_in_inefficiency(self.scpo.mean_ineff,
                                      self.baseline.mean_ineff)


def format_results_table(rows: Sequence[ResultRow]) -> str:
    header = (f"{'Dataset':<10} {'Conf.':>6} {'lambda':>7} {'gamma':>6} "
              f"{'SCPO Acc.':>9} {'Ineff.':>7} {'Base Acc.':>9} {'Ineff.':>7} "
              f"{'Ch.':>6}")
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.dataset:<10} {100 * r.confidence:>6.1f} {r.lam:>7g} "
            f"{r.gamma:>6g} {100 * r.scpo.accuracy:>9.1f} "
            f"{r.scpo.mean_ineff:>7.3f} {100 * r.baseline.accuracy:>9.1f} "
            f"{r.baseline.mean_ineff:>7.3f} {r.change:>6.1f}")
    return "\n".join(lines)
