"""Threshold-free ranking metrics and exact step curves.

All pairwise statistics are integer pair counts divided once by
``N_k * N_u``, so results are exact fractions and independent of summation
order. Ties follow ``ties="strict"`` (a tied pair scores 0, the literal
indicator) unless ``ties="half"`` (Mann-Whitney convention, a tie scores 1/2).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import EmptyInputError, ScoreTable, normalize

STRICT = "strict"
HALF = "half"

PAIRWISE = "pairwise"
SWEEP = "sweep"
MASKED = "masked"
ROUTES = (PAIRWISE, SWEEP, MASKED)


class CurveKind(enum.Enum):
    ROC = "roc"
    OSCR = "oscr"
    OFPR_COTPR = "ofpr-cotpr"


@dataclass(frozen=True)
class PairStats:
    n_close: int
    n_open: int
    correct_close: int
    concordant_pairs: int
    tied_pairs: int

    def value(self, ties: str = STRICT) -> Fraction:
        num = Fraction(self.concordant_pairs)
        if ties == HALF:
            num += Fraction(self.tied_pairs, 2)
        elif ties != STRICT:
            raise ValueError(f"unknown tie mode {ties!r}")
        return num / (self.n_close * self.n_open)


@dataclass(frozen=True, eq=False)
class Curve:
    """Step curve held as integer numerators over fixed denominators.

    Point ``i`` is ``(x_num[i]/x_den, y_num[i]/y_den, thresholds[i])``.
    """

    kind: CurveKind
    x_num: np.ndarray
    y_num: np.ndarray
    x_den: int
    y_den: int
    thresholds: np.ndarray

    def __len__(self) -> int:
        return len(self.thresholds)

    @property
    def x(self) -> np.ndarray:
        return self.x_num / self.x_den

    @property
    def y(self) -> np.ndarray:
        return self.y_num / self.y_den

    @property
    def points(self) -> list:
        return list(zip(self.x.tolist(), self.y.tolist(), self.thresholds.tolist()))

    def exact_points(self) -> list:
        return [
            (Fraction(int(a), self.x_den), Fraction(int(b), self.y_den), float(t))
            for a, b, t in zip(self.x_num, self.y_num, self.thresholds)
        ]

    def area(self, ties: str = STRICT) -> Fraction:
        """Exact area under the step curve.

        ``strict`` integrates each x-jump against the y value *before* the
        jump (left step); ``half`` uses the mean of both sides, which is the
        trapezoid over tied groups.
        """
        dx = np.diff(self.x_num).astype(object)
        left = self.y_num[:-1].astype(object)
        if ties == STRICT:
            num = Fraction(int((dx * left).sum()))
        elif ties == HALF:
            right = self.y_num[1:].astype(object)
            num = Fraction(int((dx * (left + right)).sum()), 2)
        else:
            raise ValueError(f"unknown tie mode {ties!r}")
        return num / (self.x_den * self.y_den)


def _populations(table: ScoreTable, need_open: bool = True):
    t = normalize(table)
    close = t.is_close
    if not close.any():
        raise EmptyInputError("table has no close-set samples")
    if need_open and not t.is_open.any():
        raise EmptyInputError("table has no open-set samples")
    correct = t.close_correct()[close]
    return t.open_scores[close], t.open_scores[t.is_open], correct


def _pair_counts(r_close: np.ndarray, r_open: np.ndarray):
    """Per close score: number of open scores strictly above it, and tied with it."""
    srt = np.sort(r_open)
    right = np.searchsorted(srt, r_close, side="right")
    left = np.searchsorted(srt, r_close, side="left")
    return len(srt) - right, right - left


def pair_stats(table: ScoreTable, gated: bool = False) -> PairStats:
    """Pair counts behind AUC (``gated=False``) or OpenAUC (``gated=True``)."""
    r_close, r_open, correct = _populations(table)
    gt, eq = _pair_counts(r_close, r_open)
    if gated:
        gt, eq = gt[correct], eq[correct]
    return PairStats(
        n_close=len(r_close),
        n_open=len(r_open),
        correct_close=int(correct.sum()),
        concordant_pairs=int(gt.sum()),
        tied_pairs=int(eq.sum()),
    )


def close_set_accuracy(table: ScoreTable) -> Fraction:
    _, _, correct = _populations(table, need_open=False)
    return Fraction(int(correct.sum()), len(correct))


def auc(table: ScoreTable, ties: str = STRICT) -> Fraction:
    return pair_stats(table).value(ties)


@dataclass(frozen=True)
class AggregateBaselines:
    product: Fraction
    sum: Fraction
    pointwise_sum: Fraction


def aggregate_baselines(table: ScoreTable, ties: str = STRICT) -> AggregateBaselines:
    """Decoupled aggregations of close-set accuracy and AUC."""
    stats = pair_stats(table)
    acc = Fraction(stats.correct_close, stats.n_close)
    a = stats.value(ties)
    # pointwise form: every pair scores I[correct] + I[ranked]; each correct
    # close sample pairs with all N_u open samples.
    ranked = stats.concordant_pairs + (Fraction(stats.tied_pairs, 2) if ties == HALF else 0)
    pointwise = (stats.correct_close * stats.n_open + ranked) / Fraction(stats.n_close * stats.n_open)
    return AggregateBaselines(product=acc * a, sum=acc + a, pointwise_sum=pointwise)


def _midpoints(grid: np.ndarray, upper_closed: bool = False) -> np.ndarray:
    """Cut points between consecutive sorted distinct values.

    Each cut must split ``lo`` from ``hi`` under the comparison in use: with
    ``value <= cut`` the fallback for an unrepresentable midpoint is ``lo``;
    with ``upper_closed`` (``value < cut`` selects the lower group) it is ``hi``.
    """
    if len(grid) < 2:
        return np.zeros(0)
    lo, hi = grid[:-1], grid[1:]
    mid = lo / 2 + hi / 2
    bad = ~((lo < mid) & (mid < hi))
    mid[bad] = (hi if upper_closed else lo)[bad]
    return mid


def _group_counts(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.bincount(np.searchsorted(grid, values), minlength=len(grid)).astype(np.int64)


def sweep_thresholds(table: ScoreTable) -> np.ndarray:
    """Ascending thresholds on ``r``: -inf, midpoints of distinct scores, +inf."""
    grid = np.unique(normalize(table).open_scores)
    return np.concatenate(([-math.inf], _midpoints(grid), [math.inf]))


def _ascending_accepts(table: ScoreTable):
    """Cumulative accepted counts (``r <= t``) at every ascending sweep threshold."""
    t = normalize(table)
    grid = np.unique(t.open_scores)
    thresholds = np.concatenate(([-math.inf], _midpoints(grid), [math.inf]))

    def cum(mask):
        return np.concatenate(([0], np.cumsum(_group_counts(grid, t.open_scores[mask]))))

    return thresholds, cum


def open_rates_sweep(table: ScoreTable):
    """Rejection counts for the open class over the ascending sweep.

    Returns ``(thresholds, tp_open, fp_open, n_open, n_close)`` where
    ``tp_open[i]`` counts open samples with ``r > thresholds[i]`` and
    ``fp_open[i]`` close samples with ``r > thresholds[i]``.
    """
    t = normalize(table)
    thresholds, cum = _ascending_accepts(t)
    n_open, n_close = t.n_open, t.n_close
    return thresholds, n_open - cum(t.is_open), n_close - cum(t.is_close), n_open, n_close


def roc_curve(table: ScoreTable) -> Curve:
    """(FPR, TPR) of open-set rejection, ``t`` from +inf down to -inf."""
    _populations(table)
    thresholds, tp, fp, n_open, n_close = open_rates_sweep(table)
    return Curve(CurveKind.ROC, fp[::-1].copy(), tp[::-1].copy(), n_close, n_open, thresholds[::-1].copy())


def ofpr_cotpr_curve(table: ScoreTable) -> Curve:
    """(OFPR, COTPR) for ascending ``t``; OFPR counts open samples with ``r <= t``."""
    _populations(table)
    t = normalize(table)
    thresholds, cum = _ascending_accepts(t)
    return Curve(
        CurveKind.OFPR_COTPR,
        cum(t.is_open),
        cum(t.close_correct()),
        t.n_open,
        t.n_close,
        thresholds,
    )


def oscr_curve(table: ScoreTable) -> Curve:
    """(FPR, CCR) with thresholds on confidence, ``t`` from +inf down to -inf.

    Confidence is the negated canonical score: ``-class_scores[y]`` for a
    close sample (its true class) and ``-r`` for an open sample. A sample
    counts as accepted when its confidence is strictly above ``t``.
    """
    _populations(table)
    t = normalize(table)
    close_idx = np.flatnonzero(t.is_close)
    conf = -t.open_scores.copy()
    conf[close_idx] = -t.class_scores[close_idx, t.labels[close_idx]]
    grid = np.unique(conf)[::-1]
    desc = -grid
    mids = -_midpoints(desc, upper_closed=True)
    thresholds = np.concatenate(([math.inf], mids, [-math.inf]))

    def cum(mask):
        return np.concatenate(([0], np.cumsum(_group_counts(desc, -conf[mask]))))

    return Curve(CurveKind.OSCR, cum(t.is_open), cum(t.close_correct()), t.n_open, t.n_close, thresholds)


def _masked_scores(table: ScoreTable) -> np.ndarray:
    t = normalize(table)
    top = float(t.open_scores[t.is_open].max())
    lifted = top + 1.0
    if lifted == top:
        lifted = float(np.nextafter(top, math.inf))
    wrong = t.is_close & ~t.close_correct()
    return np.where(wrong, lifted, t.open_scores)


def openauc(table: ScoreTable, route: str = PAIRWISE, ties: str = STRICT) -> Fraction:
    """OpenAUC via one of three independent computations.

    ``pairwise``
        gated pair count from sorted open scores.
    ``sweep``
        exact area under :func:`ofpr_cotpr_curve`.
    ``masked``
        plain AUC after lifting every misclassified close sample above the
        highest open score.
    """
    if route == PAIRWISE:
        return pair_stats(table, gated=True).value(ties)
    if route == SWEEP:
        return ofpr_cotpr_curve(table).area(ties)
    if route == MASKED:
        _populations(table)
        return auc(table.replace(open_scores=_masked_scores(table)), ties)
    raise ValueError(f"unknown route {route!r}; expected one of {ROUTES}")


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    tpr_open: Fraction
    fpr_open: Fraction


def operating_point_at_tpr(table: ScoreTable, target_tpr) -> OperatingPoint:
    """Largest sweep threshold whose open-class TPR reaches ``target_tpr``.

    The open class is the positive one: TPR counts open samples with
    ``r > t``, FPR counts close samples with ``r > t`` (close-set rejection).
    ``t = -inf`` rejects everything, so the search always succeeds.
    """
    target = Fraction(repr(target_tpr)) if isinstance(target_tpr, float) else Fraction(target_tpr)
    if not 0 <= target <= 1:
        raise ValueError(f"target_tpr must lie in [0, 1], got {target_tpr}")
    _populations(table)
    thresholds, tp, fp, n_open, n_close = open_rates_sweep(table)
    for i in range(len(thresholds) - 1, -1, -1):
        if Fraction(int(tp[i]), n_open) >= target:
            return OperatingPoint(float(thresholds[i]), Fraction(int(tp[i]), n_open), Fraction(int(fp[i]), n_close))
    raise AssertionError("unreachable: t=-inf rejects every sample")


def error_at_tpr(table: ScoreTable, target_tpr=0.95) -> Fraction:
    """Close-set rejection rate at the operating point reaching ``target_tpr``."""
    return operating_point_at_tpr(table, target_tpr).fpr_open


class UndefinedBoundError(ValueError):
    pass


def tpr_lower_bound(openauc_value, fpr_open):
    """Guaranteed open-class TPR at a threshold with close-set rejection rate ``fpr_open``.

    ``1 - (1 - OpenAUC) / fpr_open``; may be negative (vacuous).
    """
    if fpr_open == 0:
        raise UndefinedBoundError("the bound needs a nonzero close-set rejection rate")
    if not 0 < fpr_open <= 1:
        raise ValueError(f"fpr_open must lie in (0, 1], got {fpr_open}")
    if not 0 <= openauc_value <= 1:
        raise ValueError(f"openauc_value must lie in [0, 1], got {openauc_value}")
    return 1 - (1 - openauc_value) / fpr_open


def recommended_operating_point(table: ScoreTable, openauc_value=None) -> OperatingPoint:
    """Operating point suggested by the OpenAUC TPR guarantee.

    The guaranteed TPR minus the close-set rejection rate,
    ``1 - (1-k)/a - a``, peaks at ``a* = sqrt(1 - k)``. Returns the largest
    sweep threshold whose rejection rate reaches ``a*``.
    """
    k = openauc(table) if openauc_value is None else openauc_value
    target = math.sqrt(1 - float(k))
    thresholds, tp, fp, n_open, n_close = open_rates_sweep(table)
    for i in range(len(thresholds) - 1, -1, -1):
        if fp[i] / n_close >= target:
            return OperatingPoint(float(thresholds[i]), Fraction(int(tp[i]), n_open), Fraction(int(fp[i]), n_close))
    raise AssertionError("unreachable: t=-inf rejects every sample")
