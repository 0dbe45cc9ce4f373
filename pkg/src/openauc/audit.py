"""Constructive counterexamples for open-set metrics.

Each ``construct_*`` function rewrites a prediction table step by step in a
way that provably leaves some metric unchanged (or improves it) while the
model gets worse at rejecting unknowns, then recomputes everything with
exact rational arithmetic and reports whether the claimed relation held.

Decision-level constructions (``prop1``, ``prop2``) work on
:class:`DecisionTable` rows ``(label, prediction)``; score-level ones
(``prop3``, ``prop5``) work on :class:`~openauc.core.ScoreTable`.
Candidate samples are always taken in ascending row order.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import ranking
from .classification import MACRO, MICRO, normalized_accuracy, open_set_fscore, youden_index
from .confusion import ExtendedConfusionMatrix
from .core import FILE_OPEN, EmptyInputError, MalformedInputError, ScoreTable, decide_all, normalize


class Construction(enum.Enum):
    PROP1 = "prop1"
    PROP2 = "prop2"
    PROP3 = "prop3"
    PROP5 = "prop5"


class Verdict(enum.Enum):
    CONFIRMED_INCONSISTENT = "confirmed_inconsistent"
    CONFIRMED_IMMUNE = "confirmed_immune"
    CONDITION_NOT_MET = "condition_not_met"
    VIOLATED = "violated"


@dataclass(frozen=True, eq=False)
class DecisionTable:
    """Hard decisions only; labels and predictions use open = ``C``."""

    num_known_classes: int
    ids: tuple
    labels: np.ndarray
    predictions: np.ndarray

    @classmethod
    def from_arrays(cls, labels, predictions, num_known_classes: int, ids=None, open_label=None):
        c = int(num_known_classes)
        marker = c if open_label is None else open_label
        lab = np.asarray(labels, dtype=np.int64).reshape(-1)
        pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
        if lab.shape != pred.shape:
            raise MalformedInputError("labels and predictions disagree on row count")
        lab = np.where(lab == marker, c, lab)
        pred = np.where(pred == marker, c, pred)
        ids = tuple(str(i) for i in range(len(lab))) if ids is None else tuple(map(str, ids))
        for name, arr in (("label", lab), ("prediction", pred)):
            bad = np.flatnonzero((arr < 0) | (arr > c))
            if bad.size:
                raise MalformedInputError(f"sample {ids[bad[0]]!r}: {name} out of range")
        lab.setflags(write=False)
        pred.setflags(write=False)
        return cls(c, ids, lab, pred)

    @classmethod
    def from_scores(cls, table: ScoreTable, threshold: float) -> "DecisionTable":
        t = normalize(table)
        return cls.from_arrays(t.labels, decide_all(t, threshold), t.num_known_classes, ids=t.ids)

    def __len__(self) -> int:
        return len(self.labels)

    def with_predictions(self, predictions) -> "DecisionTable":
        return DecisionTable.from_arrays(self.labels, predictions, self.num_known_classes, ids=self.ids)

    def confusion(self) -> ExtendedConfusionMatrix:
        return ExtendedConfusionMatrix.from_decisions(self.labels, self.predictions, self.num_known_classes)

    def file_columns(self):
        c = self.num_known_classes
        return (
            np.where(self.labels == c, FILE_OPEN, self.labels),
            np.where(self.predictions == c, FILE_OPEN, self.predictions),
        )


@dataclass
class AuditReport:
    construction: Construction
    steps_applied: int
    metric_before: dict
    metric_after: dict
    tp_open_before: Optional[int]
    tp_open_after: Optional[int]
    verdict: Verdict
    precondition: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    table_after: object = None

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, Fraction):
                return {"value": float(v), "fraction": f"{v.numerator}/{v.denominator}"}
            if isinstance(v, dict):
                return {k: enc(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [enc(x) for x in v]
            if isinstance(v, (np.integer,)):
                return int(v)
            if isinstance(v, (np.bool_,)):
                return bool(v)
            return v

        return {
            "construction": self.construction.value,
            "verdict": self.verdict.value,
            "steps_applied": self.steps_applied,
            "tp_open_before": self.tp_open_before,
            "tp_open_after": self.tp_open_after,
            "precondition": enc(self.precondition),
            "metric_before": enc(self.metric_before),
            "metric_after": enc(self.metric_after),
            "trace": enc(self.trace),
        }


def _require_open(labels, c) -> None:
    if not (np.asarray(labels) == c).any():
        raise EmptyInputError("audit needs at least one open-set sample")


def _fscore_youden(m: ExtendedConfusionMatrix) -> dict:
    return {
        "fscore_macro": open_set_fscore(m, MACRO),
        "fscore_micro": open_set_fscore(m, MICRO),
        "youden": youden_index(m),
    }


def _known_counts(m: ExtendedConfusionMatrix) -> np.ndarray:
    c = m.num_known_classes
    return np.stack([m.tp[:c], m.fp[:c], m.fn[:c], m.tn[:c]])


def construct_prop1(table: DecisionTable, metric: str = "fscore_macro") -> AuditReport:
    """Swap rejections from open samples onto misclassified close samples.

    Each step takes an open sample predicted open (``x1``) and a close sample
    accepted but misclassified (``x2``); ``x1`` receives ``h(x2)`` and ``x2``
    is rejected. Every known-class TP/FP/FN/TN count stays identical, so
    F-scores and Youden's J cannot move, while ``TP_open`` drops by one.

    The construction can only pair ``x1`` with close samples, so the
    precondition used is ``#(accepted, misclassified close) >= TP_open``.
    The literal ``sum_i FP_i`` (which also counts open samples accepted as
    known) is reported alongside it.
    """
    if metric not in ("fscore_macro", "fscore_micro", "youden"):
        raise ValueError(f"unknown metric {metric!r}")
    c = table.num_known_classes
    _require_open(table.labels, c)
    lab, pred = table.labels, table.predictions.copy()
    before = table.confusion()
    tp_open = int(before.tp[c])
    x1s = np.flatnonzero((lab == c) & (pred == c))
    x2s = np.flatnonzero((lab != c) & (pred != c) & (pred != lab))
    precondition = {
        "sum_fp_known": int(before.fp[:c].sum()),
        "misclassified_close_accepted": len(x2s),
        "tp_open": tp_open,
        "met": len(x2s) >= tp_open,
    }
    trace = []
    for x1, x2 in zip(x1s, x2s):
        pred[x1] = pred[x2]
        pred[x2] = c
        trace.append({"open_sample": table.ids[x1], "close_sample": table.ids[x2]})
    after_table = table.with_predictions(pred)
    after = after_table.confusion()
    mb, ma = _fscore_youden(before), _fscore_youden(after)
    counts_equal = bool(np.array_equal(_known_counts(before), _known_counts(after)))
    tp_after = int(after.tp[c])
    if not precondition["met"]:
        verdict = Verdict.CONDITION_NOT_MET
    elif counts_equal and mb[metric] == ma[metric] and tp_after == 0:
        verdict = Verdict.CONFIRMED_INCONSISTENT
    else:
        verdict = Verdict.VIOLATED
    precondition["known_counts_equal"] = counts_equal
    return AuditReport(
        Construction.PROP1, len(trace), mb, ma, tp_open, tp_after, verdict, precondition, trace, after_table
    )


def construct_prop2(table: DecisionTable, lambda_na=Fraction(1, 2), empty_aus=Fraction(1)) -> AuditReport:
    """Move open samples into known classes while raising Normalized Accuracy.

    Each step pairs an open sample predicted open (``x1``) with a close
    sample ``x2`` counted in some ``FN_i`` and predicts ``y2`` for both.
    Rejected close samples are consumed first: every such step keeps AKS and
    strictly raises AUS while ``TP_open > FP_open``. Once ``FP_open`` hits
    zero the remaining partners are close samples assigned a wrong known
    class; each of those steps raises AKS by ``1/(C*N)`` and keeps AUS at
    its empty-column value ``empty_aus``.

    Preconditions: ``sum_i FN_i >= TP_open`` and ``TP_open > FP_open``.
    """
    c = table.num_known_classes
    _require_open(table.labels, c)
    lab, pred = table.labels, table.predictions.copy()
    before = table.confusion()
    tp_open, fp_open = int(before.tp[c]), int(before.fp[c])
    sum_fn = int(before.fn[:c].sum())
    precondition = {
        "sum_fn_known": sum_fn,
        "tp_open": tp_open,
        "fp_open": fp_open,
        "met": sum_fn >= tp_open and tp_open > fp_open,
    }

    def nacc_of(m):
        na = normalized_accuracy(m, lambda_na, empty_aus)
        return {"aks": na.aks, "aus": na.aus, "nacc": na.nacc}

    mb = nacc_of(before)
    if not precondition["met"]:
        return AuditReport(
            Construction.PROP2, 0, mb, mb, tp_open, tp_open, Verdict.CONDITION_NOT_MET, precondition, [], table
        )
    x1s = np.flatnonzero((lab == c) & (pred == c))
    rejected = np.flatnonzero((lab != c) & (pred == c))
    misassigned = np.flatnonzero((lab != c) & (pred != c) & (pred != lab))
    x2s = np.concatenate([rejected, misassigned])
    trace = []
    current = mb
    increasing = True
    for x1, x2 in zip(x1s, x2s):
        kind = "rejected" if pred[x2] == c else "misassigned"
        pred[x1] = lab[x2]
        pred[x2] = lab[x2]
        m = ExtendedConfusionMatrix.from_decisions(lab, pred, c)
        nxt = nacc_of(m)
        increasing &= nxt["nacc"] > current["nacc"]
        trace.append({"open_sample": table.ids[x1], "close_sample": table.ids[x2], "kind": kind, **nxt})
        current = nxt
    after_table = table.with_predictions(pred)
    after = after_table.confusion()
    tp_after = int(after.tp[c])
    ok = increasing and tp_after == 0 and current["nacc"] > mb["nacc"]
    verdict = Verdict.CONFIRMED_INCONSISTENT if ok else Verdict.VIOLATED
    return AuditReport(
        Construction.PROP2, len(trace), mb, current, tp_open, tp_after, verdict, precondition, trace, after_table
    )


def _decoupled_metrics(table: ScoreTable) -> dict:
    agg = ranking.aggregate_baselines(table)
    return {
        "acc_k": ranking.close_set_accuracy(table),
        "auc": ranking.auc(table),
        "product": agg.product,
        "sum": agg.sum,
        "pointwise_sum": agg.pointwise_sum,
        "openauc": ranking.openauc(table),
    }


def _find_prop3_witness(r, correct_idx, wrong_idx, open_idx):
    """First (x1 correct, x2 wrong, x3 open) with ``r[x2] > r[x3] > r[x1]``."""
    r_open = r[open_idx]
    srt = np.sort(r_open)
    for x2 in wrong_idx:
        below = np.searchsorted(srt, r[x2], side="left")
        n_between = below - np.searchsorted(srt, r[correct_idx], side="right")
        hits = np.flatnonzero(n_between > 0)
        if hits.size:
            x1 = correct_idx[hits[0]]
            x3 = open_idx[np.argmax((r_open > r[x1]) & (r_open < r[x2]))]
            return x1, x2, x3
    return None


def construct_prop3(table: ScoreTable, max_steps: Optional[int] = None) -> AuditReport:
    """Swap open-set scores of a correct and a wrong close sample around an open one.

    Close-set predictions never change and the close score multiset is
    preserved, so Acc_k, AUC and every aggregation of the two are invariant;
    OpenAUC loses at least one concordant pair per swap.
    """
    t = normalize(table)
    _require_open(t.labels, t.num_known_classes)
    r = t.open_scores.copy()
    correct = t.close_correct()
    correct_idx = np.flatnonzero(correct)
    wrong_idx = np.flatnonzero(t.is_close & ~correct)
    open_idx = np.flatnonzero(t.is_open)
    before = _decoupled_metrics(t)
    trace = []
    pairs = ranking.pair_stats(t, gated=True).concordant_pairs
    drops_ok = True
    while max_steps is None or len(trace) < max_steps:
        w = _find_prop3_witness(r, correct_idx, wrong_idx, open_idx)
        if w is None:
            break
        x1, x2, x3 = w
        r[x1], r[x2] = r[x2], r[x1]
        new_pairs = ranking.pair_stats(t.replace(open_scores=r), gated=True).concordant_pairs
        drops_ok &= pairs - new_pairs >= 1
        trace.append({
            "correct_close": t.ids[x1],
            "wrong_close": t.ids[x2],
            "open": t.ids[x3],
            "concordant_pairs_lost": pairs - new_pairs,
        })
        pairs = new_pairs
    after_table = t.replace(open_scores=r)
    after = _decoupled_metrics(after_table)
    precondition = {"witness_found": bool(trace)}
    if not trace:
        verdict = Verdict.CONDITION_NOT_MET
    else:
        decoupled_same = all(before[k] == after[k] for k in ("acc_k", "auc", "product", "sum", "pointwise_sum"))
        ok = decoupled_same and drops_ok and after["openauc"] < before["openauc"]
        verdict = Verdict.CONFIRMED_INCONSISTENT if ok else Verdict.VIOLATED
    return AuditReport(
        Construction.PROP3, len(trace), before, after, None, None, verdict, precondition, trace, after_table
    )


def verify_prop5(table: ScoreTable, threshold: Optional[float] = None) -> AuditReport:
    """Trade the rejection of an open sample for that of a misclassified close one.

    The witness is an open ``x1`` and an accepted misclassified close ``x2``
    with ``r(x2) < r(x1)`` (and ``r(x2) <= t < r(x1)`` when ``threshold`` is
    given). Their open-set scores are exchanged, which moves the rejection
    from ``x1`` to ``x2``. OpenAUC falls by exactly the number of correctly
    classified close samples with ``r(x2) <= r < r(x1)``, over ``N_k N_u``.
    """
    t = normalize(table)
    _require_open(t.labels, t.num_known_classes)
    r = t.open_scores.copy()
    correct = t.close_correct()
    wrong_idx = np.flatnonzero(t.is_close & ~correct)
    before = {"openauc": ranking.openauc(t), "acc_k": ranking.close_set_accuracy(t), "auc": ranking.auc(t)}
    witness = None
    for x1 in np.flatnonzero(t.is_open):
        if threshold is not None and not r[x1] > threshold:
            continue
        ok = r[wrong_idx] < r[x1]
        if threshold is not None:
            ok &= r[wrong_idx] <= threshold
        if ok.any():
            witness = (x1, wrong_idx[np.argmax(ok)])
            break
    if witness is None:
        return AuditReport(
            Construction.PROP5, 0, before, before, None, None, Verdict.CONDITION_NOT_MET,
            {"witness_found": False}, [], t,
        )
    x1, x2 = witness
    lo, hi = r[x2], r[x1]
    r_correct = r[correct]
    gap = int(((r_correct >= lo) & (r_correct < hi)).sum())
    strict_gap = int(((r_correct > lo) & (r_correct < hi)).sum())
    r[x1], r[x2] = lo, hi
    after_table = t.replace(open_scores=r)
    after = {
        "openauc": ranking.openauc(after_table),
        "acc_k": ranking.close_set_accuracy(after_table),
        "auc": ranking.auc(after_table),
    }
    expected_drop = Fraction(gap, t.n_close * t.n_open)
    exact = before["openauc"] - after["openauc"] == expected_drop
    strict_ok = after["openauc"] < before["openauc"] if strict_gap else True
    verdict = Verdict.CONFIRMED_IMMUNE if exact and strict_ok else Verdict.VIOLATED
    precondition = {
        "witness_found": True,
        "gap_correct_close": gap,
        "strict_gap_correct_close": strict_gap,
        "case": "strict" if gap else "equality",
    }
    trace = [{"open_sample": t.ids[x1], "close_sample": t.ids[x2], "openauc_drop": expected_drop}]
    return AuditReport(Construction.PROP5, 1, before, after, None, None, verdict, precondition, trace, after_table)
