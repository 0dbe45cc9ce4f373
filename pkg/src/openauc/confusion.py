"""Extended (C+1)-class confusion matrix with the open super-class as last row/column."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import EmptyInputError, ScoreTable, decide_all


def ratio(num, den) -> Fraction:
    """``num/den`` as an exact fraction; 0/0 is taken to be 0."""
    num, den = int(num), int(den)
    return Fraction(0) if den == 0 else Fraction(num, den)


@dataclass(frozen=True, eq=False)
class ExtendedConfusionMatrix:
    """Raw counts; rows are true labels, columns predictions, index ``C`` is open."""

    counts: np.ndarray
    threshold: float = float("nan")

    @classmethod
    def from_decisions(cls, labels, predictions, num_known_classes: int, threshold=float("nan")):
        labels = np.asarray(labels, dtype=np.int64)
        predictions = np.asarray(predictions, dtype=np.int64)
        if labels.size == 0:
            raise EmptyInputError("cannot build a confusion matrix from an empty table")
        k = num_known_classes + 1
        counts = np.bincount(labels * k + predictions, minlength=k * k).reshape(k, k)
        counts.setflags(write=False)
        return cls(counts, threshold)

    @property
    def num_known_classes(self) -> int:
        return self.counts.shape[0] - 1

    @property
    def open_index(self) -> int:
        return self.num_known_classes

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def tp(self) -> np.ndarray:
        return np.diag(self.counts).copy()

    @property
    def fn(self) -> np.ndarray:
        return self.counts.sum(axis=1) - self.tp

    @property
    def fp(self) -> np.ndarray:
        return self.counts.sum(axis=0) - self.tp

    @property
    def tn(self) -> np.ndarray:
        return self.total - self.tp - self.fp - self.fn

    def class_counts(self, i: int) -> dict:
        self._check_index(i)
        return {"tp": int(self.tp[i]), "fp": int(self.fp[i]), "fn": int(self.fn[i]), "tn": int(self.tn[i])}

    def degenerate_classes(self) -> list:
        """Known classes whose precision or recall is 0/0 at this threshold."""
        tp, fp, fn = self.tp, self.fp, self.fn
        c = self.num_known_classes
        return [i for i in range(c) if tp[i] + fp[i] == 0 or tp[i] + fn[i] == 0]

    def _check_index(self, i: int) -> None:
        if not 0 <= i <= self.num_known_classes:
            raise IndexError(f"class index {i} outside 0..{self.num_known_classes}")


@dataclass(frozen=True)
class ClassRates:
    tpr: Fraction
    tnr: Fraction
    precision: Fraction


def build_confusion(table: ScoreTable, threshold: float) -> ExtendedConfusionMatrix:
    if len(table) == 0:
        raise EmptyInputError("cannot build a confusion matrix from an empty table")
    pred = decide_all(table, threshold)
    return ExtendedConfusionMatrix.from_decisions(
        table.labels, pred, table.num_known_classes, threshold
    )


def per_class_rates(m: ExtendedConfusionMatrix, i: int) -> ClassRates:
    m._check_index(i)
    tp, fp, fn, tn = (int(v[i]) for v in (m.tp, m.fp, m.fn, m.tn))
    return ClassRates(tpr=ratio(tp, tp + fn), tnr=ratio(tn, tn + fp), precision=ratio(tp, tp + fp))
