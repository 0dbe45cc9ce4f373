"""Collect every metric for one score table into a serialisable report."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

from . import ranking
from .classification import MACRO, MICRO, as_fraction, normalized_accuracy, open_set_fscore, youden_index
from .confusion import build_confusion
from .core import EmptyInputError, ScoreTable

SCALARS = (
    "acc_k",
    "auc",
    "openauc",
    "acc_auc_product",
    "acc_auc_sum",
    "acc_auc_pointwise_sum",
    "error_at_tpr",
)


class InternalConsistencyError(RuntimeError):
    """The independent OpenAUC routes disagreed."""


def threshold_metrics(table: ScoreTable, threshold: float, lambda_na=Fraction(1, 2)) -> dict:
    m = build_confusion(table, threshold)
    c = m.num_known_classes
    na = normalized_accuracy(m, lambda_na)
    n_open, n_close = table.n_open, table.n_close
    out = {
        "threshold": threshold,
        "f_macro": open_set_fscore(m, MACRO),
        "f_micro": open_set_fscore(m, MICRO),
        "youden": youden_index(m),
        "aks": na.aks,
        "aus": na.aus,
        "nacc": na.nacc,
        "tpr_open": Fraction(int(m.tp[c]), n_open) if n_open else None,
        "fpr_open": Fraction(int(m.fp[c]), n_close) if n_close else None,
        "degenerate_classes": m.degenerate_classes(),
    }
    assert out["nacc"] == na.lambda_na * out["aks"] + (1 - na.lambda_na) * out["aus"]
    return out


@dataclass
class MetricReport:
    scalars: dict = field(default_factory=dict)
    routes: dict = field(default_factory=dict)
    per_threshold: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    lambda_na: Fraction = Fraction(1, 2)
    target_tpr: Fraction = Fraction(19, 20)
    error_threshold: Optional[float] = None
    ties: str = ranking.STRICT

    def to_dict(self) -> dict:
        def num(v):
            return None if v is None else float(v)

        def exact(v):
            return None if v is None else f"{v.numerator}/{v.denominator}"

        def thr(t):
            return t if t is None or math.isfinite(t) else ("inf" if t > 0 else "-inf")

        rows = []
        for row in self.per_threshold:
            rows.append({
                "threshold": thr(row["threshold"]),
                "metrics": {k: num(v) for k, v in row.items() if k not in ("threshold", "degenerate_classes")},
                "exact": {k: exact(v) for k, v in row.items() if k not in ("threshold", "degenerate_classes")},
                "degenerate_classes": row["degenerate_classes"],
            })
        return {
            "metrics": {k: num(v) for k, v in self.scalars.items()},
            "exact": {k: exact(v) for k, v in self.scalars.items()},
            "openauc_routes": {
                "values": {k: num(v) for k, v in self.routes.items()},
                "agree": len(set(self.routes.values())) <= 1,
            },
            "error_at_tpr_target": float(self.target_tpr),
            "error_at_tpr_threshold": thr(self.error_threshold),
            "lambda_na": float(self.lambda_na),
            "ties": self.ties,
            "thresholds": rows,
            "errors": self.errors,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def format_table(self) -> str:
        def line(name, v):
            if v is None:
                return f"  {name:<24} {'n/a':>16}"
            return f"  {name:<24} {float(v):>16.12g}   {v.numerator}/{v.denominator}"

        out = ["threshold-free metrics"]
        for k, v in self.scalars.items():
            out.append(line(k, v))
        if self.routes:
            agree = "agree" if len(set(self.routes.values())) <= 1 else "DISAGREE"
            out.append(f"openauc routes ({agree})")
            for k, v in self.routes.items():
                out.append(line(k, v))
        for row in self.per_threshold:
            out.append(f"threshold {row['threshold']!r} (lambda_na={float(self.lambda_na):g})")
            for k, v in row.items():
                if k in ("threshold", "degenerate_classes"):
                    continue
                out.append(line(k, v))
            if row["degenerate_classes"]:
                out.append(f"  warning: degenerate classes {row['degenerate_classes']}")
        for k, msg in self.errors.items():
            out.append(f"error[{k}]: {msg}")
        return "\n".join(out)


def evaluate_table(
    table: ScoreTable,
    thresholds: Iterable[float] = (),
    lambda_na=Fraction(1, 2),
    target_tpr=Fraction(19, 20),
    ties: str = ranking.STRICT,
) -> MetricReport:
    """Compute every metric, recording (not raising) missing-population errors.

    Raises :class:`InternalConsistencyError` if the three OpenAUC routes
    disagree.
    """
    rep = MetricReport(lambda_na=as_fraction(lambda_na), target_tpr=as_fraction(target_tpr), ties=ties)
    try:
        rep.scalars["acc_k"] = ranking.close_set_accuracy(table)
    except EmptyInputError as e:
        rep.errors["acc_k"] = str(e)
    try:
        rep.scalars["auc"] = ranking.auc(table, ties)
        rep.routes = {route: ranking.openauc(table, route, ties) for route in ranking.ROUTES}
        rep.scalars["openauc"] = rep.routes[ranking.PAIRWISE]
        agg = ranking.aggregate_baselines(table, ties)
        rep.scalars["acc_auc_product"] = agg.product
        rep.scalars["acc_auc_sum"] = agg.sum
        rep.scalars["acc_auc_pointwise_sum"] = agg.pointwise_sum
        op = ranking.operating_point_at_tpr(table, rep.target_tpr)
        rep.scalars["error_at_tpr"] = op.fpr_open
        rep.error_threshold = op.threshold
    except EmptyInputError as e:
        for k in ("auc", "openauc", "acc_auc_product", "acc_auc_sum", "acc_auc_pointwise_sum", "error_at_tpr"):
            rep.errors[k] = str(e)
    for t in thresholds:
        try:
            rep.per_threshold.append(threshold_metrics(table, float(t), rep.lambda_na))
        except EmptyInputError as e:
            rep.errors[f"threshold={t}"] = str(e)
    if len(set(rep.routes.values())) > 1:
        raise InternalConsistencyError(f"OpenAUC routes disagree: {rep.routes}")
    return rep


SWEEP_METRICS = ("f_macro", "f_micro", "youden", "nacc", "aks", "aus")


def sweep_rows(table: ScoreTable, metrics: Iterable[str] = SWEEP_METRICS, lambda_na=Fraction(1, 2)) -> list:
    """One row per sweep threshold (ascending) with the requested metrics."""
    metrics = list(metrics)
    unknown = set(metrics) - set(SWEEP_METRICS)
    if unknown:
        raise ValueError(f"unknown sweep metrics: {sorted(unknown)}")
    rows = []
    for t in ranking.sweep_thresholds(table):
        full = threshold_metrics(table, float(t), lambda_na)
        rows.append({
            "threshold": float(t),
            **{k: full[k] for k in metrics},
            "tpr_open": full["tpr_open"],
            "fpr_open": full["fpr_open"],
        })
    return rows
