from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from openauc.audit import (
    Construction,
    DecisionTable,
    Verdict,
    construct_prop1,
    construct_prop2,
    construct_prop3,
    verify_prop5,
)
from openauc.core import EmptyInputError, ScoreTable
from openauc.ranking import openauc

from generators import prop1_table, prop2_table, prop3_table, prop5_table

O = -1
W_ROWS = [("a1", 0, 0), ("a2", 0, 0), ("b1", 1, 1), ("b2", 1, O), ("u1", O, O), ("u2", O, O)]


def decisions(rows, c=2):
    ids, lab, pred = zip(*rows)
    return DecisionTable.from_arrays(lab, pred, c, ids=ids, open_label=O)


def score_table(close, opn):
    labels, scores, r = [], [], []
    for v, ok in close:
        labels.append(0)
        scores.append([0.0, 1.0] if ok else [1.0, 0.0])
        r.append(v)
    for v in opn:
        labels.append(2)
        scores.append([0.0, 0.0])
        r.append(v)
    return ScoreTable.from_arrays(labels, scores, r, num_known_classes=2)


# ---- prop 1


def test_prop1_worked_table_plus_misclassified_sample():
    dt = decisions(W_ROWS + [("c", 0, 1)])
    rep = construct_prop1(dt)
    assert rep.steps_applied == 1
    assert rep.trace == [{"open_sample": "u1", "close_sample": "c"}]
    assert (rep.tp_open_before, rep.tp_open_after) == (2, 1)
    assert rep.metric_after == rep.metric_before
    # one eligible partner for two open hits: the precondition fails, partial progress is still made
    assert rep.verdict is Verdict.CONDITION_NOT_MET


def test_prop1_without_known_false_positives():
    rep = construct_prop1(decisions(W_ROWS))
    assert rep.verdict is Verdict.CONDITION_NOT_MET and rep.steps_applied == 0


def test_prop1_full_iteration():
    dt = decisions(W_ROWS + [("c", 0, 1), ("d", 1, 0)])
    rep = construct_prop1(dt)
    assert rep.verdict is Verdict.CONFIRMED_INCONSISTENT
    assert rep.tp_open_after == 0
    assert rep.metric_after == rep.metric_before
    assert rep.precondition["known_counts_equal"]


def test_prop1_literal_fp_sum_counts_open_samples_that_cannot_be_used():
    # u3 is open but predicted 0: it adds to FP_0, yet only close samples can take a rejection
    dt = decisions(W_ROWS + [("c", 0, 1), ("u3", O, 0)])
    rep = construct_prop1(dt)
    assert rep.precondition["sum_fp_known"] >= rep.tp_open_before
    assert rep.verdict is Verdict.CONDITION_NOT_MET
    assert rep.tp_open_after == 1


def test_prop1_needs_open_samples():
    with pytest.raises(EmptyInputError):
        construct_prop1(decisions([("a", 0, 1), ("b", 1, 0)]))


def test_prop1_rejects_unknown_metric():
    with pytest.raises(ValueError):
        construct_prop1(decisions(W_ROWS), "accuracy")


@pytest.mark.parametrize("seed", range(50))
def test_prop1_random_preserves_counts(seed):
    dt = prop1_table(np.random.default_rng(seed))
    rep = construct_prop1(dt, ["fscore_macro", "fscore_micro", "youden"][seed % 3])
    before, after = dt.confusion(), rep.table_after.confusion()
    c = dt.num_known_classes
    for arr in ("tp", "fp", "fn", "tn"):
        assert np.array_equal(getattr(before, arr)[:c], getattr(after, arr)[:c])
    assert rep.verdict is Verdict.CONFIRMED_INCONSISTENT and rep.tp_open_after == 0
    assert Counter(dt.labels.tolist()) == Counter(rep.table_after.labels.tolist())


# ---- prop 2


def test_prop2_worked_table_plus_misassigned_sample():
    dt = decisions(W_ROWS + [("c", 1, 0)])
    rep = construct_prop2(dt, Fraction(1, 2))
    assert rep.verdict is Verdict.CONFIRMED_INCONSISTENT
    assert rep.metric_before["aus"] == Fraction(2, 3)
    first = rep.trace[0]
    assert first["kind"] == "rejected" and first["close_sample"] == "b2"
    assert first["aus"] > Fraction(2, 3) and first["nacc"] > rep.metric_before["nacc"]
    assert rep.tp_open_after == 0
    assert rep.metric_after["nacc"] > rep.metric_before["nacc"]


def test_prop2_rejected_close_partner_fails_open_margin():
    # the rejected partner adds to FP_open, so TP_open > FP_open no longer holds
    rep = construct_prop2(decisions(W_ROWS + [("c", 1, O)]))
    assert rep.verdict is Verdict.CONDITION_NOT_MET and rep.steps_applied == 0


def test_prop2_equal_open_counts_fail():
    rows = [("a", 0, 1), ("b", 1, O), ("u", O, O)]
    rep = construct_prop2(decisions(rows))
    assert rep.precondition["tp_open"] == rep.precondition["fp_open"]
    assert rep.verdict is Verdict.CONDITION_NOT_MET


def test_prop2_zero_convention_for_empty_open_column_breaks_last_step():
    dt = decisions(W_ROWS + [("c", 1, 0)])
    rep = construct_prop2(dt, Fraction(1, 2), empty_aus=0)
    assert rep.trace[-1]["nacc"] < rep.trace[-2]["nacc"]
    assert rep.verdict is Verdict.VIOLATED


@pytest.mark.parametrize("seed", range(50))
def test_prop2_random_nacc_increases_each_step(seed):
    dt = prop2_table(np.random.default_rng(seed))
    rep = construct_prop2(dt, Fraction(1, 2))
    assert rep.verdict is Verdict.CONFIRMED_INCONSISTENT
    steps = [rep.metric_before["nacc"]] + [s["nacc"] for s in rep.trace]
    assert all(b > a for a, b in zip(steps, steps[1:]))
    assert rep.tp_open_after == 0


# ---- prop 3


def test_prop3_three_sample_witness():
    t = score_table([(0.1, True), (0.5, False)], [0.3])
    rep = construct_prop3(t)
    assert rep.verdict is Verdict.CONFIRMED_INCONSISTENT
    for k in ("acc_k", "auc", "product", "sum", "pointwise_sum"):
        assert rep.metric_before[k] == rep.metric_after[k]
    assert (rep.metric_before["openauc"], rep.metric_after["openauc"]) == (Fraction(1, 2), 0)


def test_prop3_all_correct_has_no_witness():
    rep = construct_prop3(score_table([(0.1, True), (0.5, True)], [0.3]))
    assert rep.verdict is Verdict.CONDITION_NOT_MET


def test_prop3_multiple_witnesses_each_lose_a_pair():
    t = score_table([(0.1, True), (0.2, True), (0.6, False), (0.7, False)], [0.3, 0.4])
    rep = construct_prop3(t)
    assert rep.steps_applied >= 2
    assert all(s["concordant_pairs_lost"] >= 1 for s in rep.trace)


@pytest.mark.parametrize("seed", range(30))
def test_prop3_random_preserves_score_multisets(seed):
    t = prop3_table(np.random.default_rng(seed))
    rep = construct_prop3(t, max_steps=3)
    after = rep.table_after
    for mask in (t.is_open, t.is_close):
        assert sorted(t.open_scores[mask]) == sorted(after.open_scores[mask])
    assert rep.verdict is Verdict.CONFIRMED_INCONSISTENT


# ---- prop 5


def test_prop5_single_correct_sample_in_gap():
    t = score_table([(0.1, False), (0.2, True)], [0.3])
    rep = verify_prop5(t)
    assert rep.verdict is Verdict.CONFIRMED_IMMUNE
    assert rep.metric_before["openauc"] - rep.metric_after["openauc"] == Fraction(1, 2)


def test_prop5_empty_gap_leaves_openauc():
    t = score_table([(0.1, False), (0.5, True)], [0.3])
    rep = verify_prop5(t)
    assert rep.metric_after["openauc"] == rep.metric_before["openauc"]
    assert rep.precondition["gap_correct_close"] == 0 and rep.precondition["case"] == "equality"


def test_prop5_without_witness():
    rep = verify_prop5(score_table([(0.5, False), (0.1, True)], [0.3]))
    assert rep.verdict is Verdict.CONDITION_NOT_MET


def test_prop5_respects_threshold():
    t = score_table([(0.1, False), (0.2, True)], [0.3])
    assert verify_prop5(t, threshold=0.15).verdict is Verdict.CONFIRMED_IMMUNE
    assert verify_prop5(t, threshold=0.05).verdict is Verdict.CONDITION_NOT_MET


@pytest.mark.parametrize("seed", range(30))
def test_prop5_random(seed):
    t = prop5_table(np.random.default_rng(seed))
    rep = verify_prop5(t)
    assert rep.metric_after["openauc"] <= rep.metric_before["openauc"]
    assert openauc(rep.table_after) == rep.metric_after["openauc"]
    assert rep.verdict is Verdict.CONFIRMED_IMMUNE


def test_report_serialises_fractions():
    d = construct_prop3(score_table([(0.1, True), (0.5, False)], [0.3])).to_dict()
    assert d["construction"] == Construction.PROP3.value
    assert d["metric_after"]["openauc"] == {"value": 0.0, "fraction": "0/1"}
