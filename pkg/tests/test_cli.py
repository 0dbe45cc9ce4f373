import csv
import io
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from openauc.cli import main
from openauc.io import read_predictions
from openauc.report import sweep_rows
from openauc.synth import SynthConfig, generate_synth
from openauc.trainer import TrainConfig, predict_table, train


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


THREE = "id,label,score_0,score_1,r\nx1,0,0.1,0.9,0.1\nx2,0,0.9,0.5,0.5\nx3,-1,0.5,0.5,0.3\n"


# ---- evaluate


def test_evaluate_worked_table(capsys, worked_w_path):
    code, out, _ = run(capsys, "evaluate", worked_w_path, "--threshold", "0.5")
    assert code == 0
    assert "6/7" in out and "19/24" in out
    assert "0.857142857143" in out


def test_evaluate_json_matches_table(capsys, worked_w_path):
    _, table_out, _ = run(capsys, "evaluate", worked_w_path, "--threshold", "0.5")
    code, out, _ = run(capsys, "evaluate", worked_w_path, "--threshold", "0.5", "--json")
    assert code == 0
    doc = json.loads(out)
    row = doc["thresholds"][0]
    assert row["exact"]["f_macro"] == "6/7"
    assert row["metrics"]["youden"] == 0.75
    assert row["exact"]["nacc"] == "19/24"
    assert doc["openauc_routes"]["agree"]
    for name, v in doc["metrics"].items():
        assert math.isfinite(v)
        assert f"{v:.12g}" in table_out


def test_evaluate_without_open_rows(capsys, tmp_path):
    p = write(tmp_path, "close.csv", "id,label,score_0,score_1\na,0,0.1,0.9\nb,1,0.8,0.2\n")
    code, out, _ = run(capsys, "evaluate", p, "--threshold", "0.5", "--json")
    doc = json.loads(out)
    assert code == 0
    assert "openauc" in doc["errors"] and "auc" in doc["errors"]
    assert doc["metrics"]["acc_k"] == 1.0
    assert doc["thresholds"][0]["metrics"]["f_macro"] == 1.0


def test_evaluate_parse_error_exit_code(capsys, tmp_path):
    p = write(tmp_path, "bad.csv", "id,label,score_0\nx,0,oops\n")
    code, _, err = run(capsys, "evaluate", p)
    assert code == 1 and "line 2" in err


def test_bad_usage_exit_code(capsys):
    with pytest.raises(SystemExit) as e:
        main(["curve", "x.csv", "--kind", "pr"])
    assert e.value.code == 1


# ---- curve


def curve_rows(out):
    return [tuple(r) for r in csv.reader(io.StringIO(out))][1:]


def test_curve_three_sample_hand_sweep(capsys, tmp_path):
    p = write(tmp_path, "three.csv", THREE)
    code, out, _ = run(capsys, "curve", p, "--kind", "ofpr-cotpr")
    assert code == 0
    assert curve_rows(out) == [
        ("0.0", "0.0", "-inf"),
        ("0.0", "0.5", "0.2"),
        ("1.0", "0.5", "0.4"),
        ("1.0", "0.5", "inf"),
    ]


def test_curve_separable_all_correct(capsys, tmp_path):
    p = write(tmp_path, "sep.csv", "id,label,score_0,score_1\na,0,0.1,0.9\nb,1,0.9,0.2\nu,-1,0.8,0.7\nv,-1,0.95,0.9\n")
    _, out, _ = run(capsys, "curve", p, "--kind", "ofpr-cotpr")
    rows = [(float(x), float(y)) for x, y, _ in curve_rows(out)]
    assert rows[-1] == (1.0, 1.0)
    assert rows[-2][0] >= 0 and rows[-2][1] == 1.0


@pytest.mark.parametrize("kind", ["roc", "oscr"])
def test_curve_endpoints(capsys, tmp_path, kind):
    p = write(tmp_path, "three.csv", THREE)
    _, out, _ = run(capsys, "curve", p, "--kind", kind)
    rows = [(float(x), float(y)) for x, y, _ in curve_rows(out)]
    assert rows[0][0] == 0.0 and rows[-1][0] == 1.0
    if kind == "roc":
        assert rows[0] == (0.0, 0.0) and rows[-1] == (1.0, 1.0)


# ---- audit


def test_audit_prop3_witness_file(capsys, tmp_path):
    p = write(tmp_path, "three.csv", THREE)
    code, out, _ = run(capsys, "audit", p, "--construction", "prop3")
    doc = json.loads(out)
    assert code == 0
    assert doc["metric_before"]["auc"] == doc["metric_after"]["auc"]
    assert doc["metric_before"]["openauc"]["fraction"] == "1/2"
    assert doc["metric_after"]["openauc"]["fraction"] == "0/1"
    adv = read_predictions(tmp_path / "three.adv.csv")
    assert adv.open_scores.tolist() == [0.5, 0.1, 0.3]


def test_audit_prop1_decision_file(capsys, tmp_path):
    p = write(tmp_path, "d.csv", "id,label,prediction\na,0,1\nb,1,0\nc,1,1\nu,-1,-1\nv,-1,-1\n")
    code, out, _ = run(capsys, "audit", p, "--construction", "prop1", "--metric", "youden")
    doc = json.loads(out)
    assert code == 0
    assert doc["metric_before"] == doc["metric_after"]
    assert doc["tp_open_after"] == 0
    assert (tmp_path / "d.adv.csv").read_text().splitlines()[1:] == ["a,0,-1", "b,1,-1", "c,1,1", "u,-1,1", "v,-1,0"]


def test_audit_prop2_condition_not_met(capsys, tmp_path):
    p = write(tmp_path, "d.csv", "id,label,prediction\na,0,0\nb,1,-1\nu,-1,-1\nv,-1,0\n")
    code, out, _ = run(capsys, "audit", p, "--construction", "prop2")
    assert code == 2
    assert json.loads(out)["verdict"] == "condition_not_met"


def test_audit_prop1_on_prediction_file_needs_threshold(capsys, worked_w_path):
    code, _, err = run(capsys, "audit", worked_w_path, "--construction", "prop1")
    assert code == 1 and "--threshold" in err


def test_audit_prop5_from_predictions(capsys, tmp_path):
    p = write(tmp_path, "p5.csv", "id,label,score_0,score_1,r\nw,0,0.9,0.1,0.1\nc,0,0.1,0.9,0.2\nu,-1,0.5,0.5,0.3\n")
    code, out, _ = run(capsys, "audit", p, "--construction", "prop5")
    doc = json.loads(out)
    assert code == 0 and doc["verdict"] == "confirmed_immune"
    assert doc["metric_after"]["openauc"]["fraction"] == "0/1"


# ---- sweep


def test_sweep_row_count_and_monotone_tpr(capsys, tmp_path):
    # five distinct scores give four midpoints plus the two sentinels
    p = write(
        tmp_path, "s.csv",
        "id,label,score_0,score_1\na,0,0.1,0.9\nb,1,0.9,0.2\nc,0,0.4,0.8\nu,-1,0.8,0.7\nv,-1,0.95,0.9\n",
    )
    code, out, _ = run(capsys, "sweep", p, "--metrics", "f_macro,f_micro,youden,nacc,aks,aus")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 4 + 2
    tpr = [float(r["tpr_open"]) for r in rows]
    assert tpr == sorted(tpr, reverse=True)
    assert rows[0]["threshold"] == "-inf" and rows[-1]["threshold"] == "inf"


def test_sweep_unknown_metric(capsys, worked_w_path):
    code, _, err = run(capsys, "sweep", worked_w_path, "--metrics", "accuracy")
    assert code == 1


def test_nacc_peak_sits_at_low_open_tpr():
    below = 0
    for seed in range(5):
        d = generate_synth(SynthConfig(seed=seed))
        t = predict_table(train(d.train, TrainConfig(seed=seed)).state.model, d.test)
        rows = sweep_rows(t, ["nacc"])
        best = max(rows, key=lambda r: r["nacc"])
        below += best["tpr_open"] < Fraction(1, 2)
    assert below >= 4


# ---- train


def test_train_writes_artifacts_and_round_trips(capsys, tmp_path):
    code, out, _ = run(capsys, "train", "--epochs", "3", "--synth-samples", "30", "--out", tmp_path / "o")
    assert code == 0
    o = tmp_path / "o"
    assert (o / "loss_history.csv").read_text().startswith("epoch,step,loss")
    doc = json.loads((o / "report.json").read_text())
    assert "openauc" in doc["report"]["metrics"]
    d = generate_synth(SynthConfig(samples_per_class=30, seed=0))
    model = train(d.train, TrainConfig(epochs=3)).state.model
    assert read_predictions(o / "predictions.csv").equals(predict_table(model, d.test))


def test_train_seed_is_byte_deterministic(capsys, tmp_path):
    for name in ("a", "b"):
        run(capsys, "train", "--seed", "7", "--epochs", "3", "--synth-samples", "30", "--out", tmp_path / name)
    assert (tmp_path / "a" / "loss_history.csv").read_bytes() == (tmp_path / "b" / "loss_history.csv").read_bytes()


def test_train_lambda_zero_matches_close_set_baseline(capsys, tmp_path):
    run(capsys, "train", "--lambda", "0", "--epochs", "3", "--synth-samples", "30", "--out", tmp_path / "o")
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    d = generate_synth(SynthConfig(samples_per_class=30, seed=0))
    base = train(d.train, TrainConfig(lam=0.0, epochs=3), d.test)
    assert doc["report"]["metrics"]["openauc"] == float(base.report.scalars["openauc"])


def test_train_ablation_reports_both(capsys, tmp_path):
    code, out, _ = run(capsys, "train", "--ablate-gate", "--epochs", "2", "--synth-samples", "30", "--out", tmp_path)
    doc = json.loads((tmp_path / "report.json").read_text())
    assert code == 0
    assert set(doc["ablation"]) == {"gated_openauc", "ungated_openauc"}
    assert "ungated openauc" in out


def test_train_lambda_grid(capsys, tmp_path):
    code, _, _ = run(capsys, "train", "--lambda-grid", "--epochs", "1", "--synth-samples", "20", "--out", tmp_path)
    doc = json.loads((tmp_path / "report.json").read_text())
    assert code == 0 and list(doc["lambda_grid"]) == ["0.1", "0.2", "0.3", "0.4", "0.5", "0.6"]


def test_train_divergence_exit_code(capsys, tmp_path):
    with np.errstate(all="ignore"):
        code, _, err = run(capsys, "train", "--lr", "1e300", "--epochs", "3", "--synth-samples", "20",
                           "--lambda", "0.6", "--out", tmp_path)
    assert code == 3 and "non-finite" in err
