"""Score tables for open-set recognition and the decisions derived from them.

Score direction
---------------
Two conventions are accepted on input:

``OPEN_HIGH`` (canonical)
    ``class_scores[c]`` is large when the sample is *not* class ``c``; the
    open-set score ``r(x)`` defaults to ``min_c class_scores[c]``. Larger
    ``r`` means "more likely unknown". The close-set prediction is the
    argmin of ``class_scores``.

``CONFIDENCE_HIGH``
    ``class_scores[c]`` grows with the belief in class ``c`` (softmax-style).
    :func:`normalize` converts to ``OPEN_HIGH`` by negating the class scores
    and recomputing ``r = min_c(-class_scores[c]) = -max_c class_scores[c]``.

A sample is rejected (predicted open) when ``r(x) > t``; equality accepts.

Labels are integers. Known classes are ``0..C-1``; the open super-class is
stored internally as ``C`` and written to files as ``-1``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

FILE_OPEN = -1


class MalformedInputError(ValueError):
    """Raised when a table violates its structural invariants."""


class EmptyInputError(ValueError):
    """Raised when a metric needs a population the table does not contain."""


class ScoreConvention(enum.Enum):
    OPEN_HIGH = "open_high"
    CONFIDENCE_HIGH = "confidence_high"


@dataclass(frozen=True)
class ScoredSample:
    id: str
    true_label: int
    class_scores: np.ndarray
    open_score: float


@dataclass(frozen=True)
class Decision:
    rejected: bool
    predicted_class: int


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Immutable, column-oriented table of scored samples.

    ``labels`` use the internal encoding (open = ``num_known_classes``).
    Build instances with :meth:`from_arrays` rather than the raw constructor.
    """

    convention: ScoreConvention
    num_known_classes: int
    ids: tuple
    labels: np.ndarray
    class_scores: np.ndarray
    open_scores: np.ndarray

    @classmethod
    def from_arrays(
        cls,
        labels: Sequence[int],
        class_scores,
        open_scores=None,
        *,
        num_known_classes: Optional[int] = None,
        convention: ScoreConvention = ScoreConvention.OPEN_HIGH,
        ids: Optional[Sequence[str]] = None,
        open_label: Optional[int] = None,
    ) -> "ScoreTable":
        """Validate and freeze arrays into a table.

        ``open_label`` names the value marking open rows in ``labels``; it
        defaults to the internal encoding ``C``. Pass ``FILE_OPEN`` for -1.
        """
        scores = np.asarray(class_scores, dtype=float)
        if scores.ndim != 2:
            raise MalformedInputError("class_scores must be a 2-D array")
        n, width = scores.shape
        c = width if num_known_classes is None else int(num_known_classes)
        if c < 1:
            raise MalformedInputError("need at least one known class")
        ids = tuple(str(i) for i in range(n)) if ids is None else tuple(str(i) for i in ids)
        if len(ids) != n:
            raise MalformedInputError("ids and class_scores disagree on row count")
        if width != c:
            bad = ids[0] if n else "<empty>"
            raise MalformedInputError(
                f"sample {bad!r}: expected {c} class scores, got {width}"
            )
        raw = np.asarray(labels, dtype=np.int64).reshape(-1)
        if raw.shape[0] != n:
            raise MalformedInputError("labels and class_scores disagree on row count")
        marker = c if open_label is None else open_label
        lab = np.where(raw == marker, c, raw)
        bad_rows = np.flatnonzero((lab < 0) | (lab > c))
        if bad_rows.size:
            raise MalformedInputError(
                f"sample {ids[bad_rows[0]]!r}: label {raw[bad_rows[0]]} out of range"
            )
        bad_rows = np.flatnonzero(~np.isfinite(scores).all(axis=1))
        if bad_rows.size:
            raise MalformedInputError(f"sample {ids[bad_rows[0]]!r}: non-finite class score")
        if open_scores is None:
            if convention is ScoreConvention.OPEN_HIGH:
                r = scores.min(axis=1) if n else np.zeros(0)
            else:
                r = -scores.max(axis=1) if n else np.zeros(0)
        else:
            r = np.asarray(open_scores, dtype=float).reshape(-1)
            if r.shape[0] != n:
                raise MalformedInputError("open_scores and class_scores disagree on row count")
            bad_rows = np.flatnonzero(~np.isfinite(r))
            if bad_rows.size:
                raise MalformedInputError(f"sample {ids[bad_rows[0]]!r}: non-finite open score")
        return cls(convention, c, ids, _readonly(lab), _readonly(scores), _readonly(r))

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[ScoredSample],
        num_known_classes: int,
        convention: ScoreConvention = ScoreConvention.OPEN_HIGH,
    ) -> "ScoreTable":
        for s in samples:
            if len(s.class_scores) != num_known_classes:
                raise MalformedInputError(
                    f"sample {s.id!r}: expected {num_known_classes} class scores, "
                    f"got {len(s.class_scores)}"
                )
        scores = np.array([s.class_scores for s in samples], dtype=float).reshape(
            len(samples), num_known_classes
        )
        return cls.from_arrays(
            [s.true_label for s in samples],
            scores,
            [s.open_score for s in samples],
            num_known_classes=num_known_classes,
            convention=convention,
            ids=[s.id for s in samples],
        )

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[ScoredSample]:
        return iter(self.samples)

    @property
    def samples(self) -> list:
        return [
            ScoredSample(i, int(y), s, float(r))
            for i, y, s, r in zip(self.ids, self.labels, self.class_scores, self.open_scores)
        ]

    @property
    def open_label(self) -> int:
        return self.num_known_classes

    @property
    def is_open(self) -> np.ndarray:
        return self.labels == self.num_known_classes

    @property
    def is_close(self) -> np.ndarray:
        return self.labels != self.num_known_classes

    @property
    def n_close(self) -> int:
        return int(self.is_close.sum())

    @property
    def n_open(self) -> int:
        return int(self.is_open.sum())

    def close_predictions(self) -> np.ndarray:
        """Threshold-free classifier ``h``: argmin of class scores (lowest index on ties)."""
        t = normalize(self)
        if len(t) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.argmin(t.class_scores, axis=1)

    def close_correct(self) -> np.ndarray:
        """Boolean mask, per row, of ``h(x) == y`` (always False on open rows)."""
        return self.is_close & (self.close_predictions() == self.labels)

    def file_labels(self) -> np.ndarray:
        return np.where(self.is_open, FILE_OPEN, self.labels)

    def replace(self, *, open_scores=None, class_scores=None) -> "ScoreTable":
        """Copy with some score columns swapped out."""
        return ScoreTable.from_arrays(
            self.labels,
            self.class_scores if class_scores is None else class_scores,
            self.open_scores if open_scores is None else open_scores,
            num_known_classes=self.num_known_classes,
            convention=self.convention,
            ids=self.ids,
        )

    def equals(self, other: "ScoreTable") -> bool:
        return (
            self.convention is other.convention
            and self.num_known_classes == other.num_known_classes
            and self.ids == other.ids
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.class_scores, other.class_scores)
            and np.array_equal(self.open_scores, other.open_scores)
        )


def normalize(table: ScoreTable) -> ScoreTable:
    """Return ``table`` under the ``OPEN_HIGH`` convention (identity if already there)."""
    if table.convention is ScoreConvention.OPEN_HIGH:
        return table
    flipped = -table.class_scores
    r = flipped.min(axis=1) if len(table) else np.zeros(0)
    return ScoreTable.from_arrays(
        table.labels,
        flipped,
        r,
        num_known_classes=table.num_known_classes,
        convention=ScoreConvention.OPEN_HIGH,
        ids=table.ids,
    )


def decide(sample: ScoredSample, threshold: float) -> Decision:
    """Classify one canonical sample: reject iff ``open_score > threshold``."""
    if sample.open_score > threshold:
        return Decision(True, len(sample.class_scores))
    return Decision(False, int(np.argmin(sample.class_scores)))


def decide_all(table: ScoreTable, threshold: float) -> np.ndarray:
    """Vectorised :func:`decide`; returns predicted labels with open = ``C``."""
    t = normalize(table)
    pred = t.close_predictions()
    return np.where(t.open_scores > threshold, t.num_known_classes, pred)
