"""Threshold-dependent metrics read off an extended confusion matrix.

Every function returns exact :class:`~fractions.Fraction` values; sums run over
the known classes only, the open row/column enters solely through AUS.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .confusion import ExtendedConfusionMatrix, ratio

MACRO = "macro"
MICRO = "micro"


def as_fraction(v) -> Fraction:
    """Exact fraction of ``v``; floats go through their shortest repr (0.3 -> 3/10)."""
    if isinstance(v, float):
        return Fraction(repr(v))
    return Fraction(v)


def _known_precision_recall(m: ExtendedConfusionMatrix, mode: str):
    c = m.num_known_classes
    tp, fp, fn = m.tp[:c], m.fp[:c], m.fn[:c]
    if mode == MACRO:
        p = sum((ratio(tp[i], tp[i] + fp[i]) for i in range(c)), Fraction(0)) / c
        r = sum((ratio(tp[i], tp[i] + fn[i]) for i in range(c)), Fraction(0)) / c
    elif mode == MICRO:
        p = ratio(tp.sum(), tp.sum() + fp.sum())
        r = ratio(tp.sum(), tp.sum() + fn.sum())
    else:
        raise ValueError(f"unknown averaging mode {mode!r}")
    return p, r


def open_set_fscore(m: ExtendedConfusionMatrix, mode: str = MACRO) -> Fraction:
    p, r = _known_precision_recall(m, mode)
    if p + r == 0:
        return Fraction(0)
    return 2 * p * r / (p + r)


def youden_index(m: ExtendedConfusionMatrix) -> Fraction:
    """``J = TPR_k + TNR_k - 1`` with both rates macro-averaged over known classes."""
    c = m.num_known_classes
    tp, fp, fn, tn = m.tp, m.fp, m.fn, m.tn
    tpr = sum((ratio(tp[i], tp[i] + fn[i]) for i in range(c)), Fraction(0)) / c
    tnr = sum((ratio(tn[i], tn[i] + fp[i]) for i in range(c)), Fraction(0)) / c
    return tpr + tnr - 1


@dataclass(frozen=True)
class NormalizedAccuracy:
    aks: Fraction
    aus: Fraction
    nacc: Fraction
    lambda_na: Fraction


def normalized_accuracy(
    m: ExtendedConfusionMatrix, lambda_na=Fraction(1, 2), empty_aus=Fraction(0)
) -> NormalizedAccuracy:
    """AKS, AUS and their convex combination NAcc.

    ``empty_aus`` is the AUS value used when nothing is predicted open
    (``TP_open + FP_open == 0``).
    """
    lam = as_fraction(lambda_na)
    if not 0 < lam < 1:
        raise ValueError(f"lambda_na must lie in (0, 1), got {lambda_na}")
    c = m.num_known_classes
    tp, fp, fn, tn = m.tp, m.fp, m.fn, m.tn
    aks = ratio((tp[:c] + tn[:c]).sum(), (tp[:c] + tn[:c] + fp[:c] + fn[:c]).sum())
    o = m.open_index
    if tp[o] + fp[o] == 0:
        aus = as_fraction(empty_aus)
    else:
        aus = Fraction(int(tp[o]), int(tp[o] + fp[o]))
    return NormalizedAccuracy(aks, aus, lam * aks + (1 - lam) * aus, lam)


@dataclass(frozen=True)
class ClassificationMetrics:
    f_macro: Fraction
    f_micro: Fraction
    youden_j: Fraction
    aks: Fraction
    aus: Fraction
    nacc: Fraction
    lambda_na: Fraction
    threshold: float


def classification_metrics(m: ExtendedConfusionMatrix, lambda_na=Fraction(1, 2)) -> ClassificationMetrics:
    na = normalized_accuracy(m, lambda_na)
    return ClassificationMetrics(
        f_macro=open_set_fscore(m, MACRO),
        f_micro=open_set_fscore(m, MICRO),
        youden_j=youden_index(m),
        aks=na.aks,
        aus=na.aus,
        nacc=na.nacc,
        lambda_na=na.lambda_na,
        threshold=m.threshold,
    )
