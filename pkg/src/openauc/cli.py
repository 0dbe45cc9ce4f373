"""``openauc`` command line: evaluate, curve, sweep, audit and train.

Exit codes: 0 success, 1 usage or parse error, 2 audit precondition not
met, 3 internal consistency failure (route disagreement, violated audit
invariant, diverged training).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from fractions import Fraction
from pathlib import Path

from . import ranking
from .audit import Construction, DecisionTable, Verdict, construct_prop1, construct_prop2, construct_prop3, verify_prop5
from .classification import as_fraction
from .core import MalformedInputError
from .io import format_threshold, read_decisions, read_predictions, sniff_kind, write_curve, write_decisions, write_predictions
from .report import SWEEP_METRICS, InternalConsistencyError, evaluate_table, sweep_rows
from .synth import SynthConfig, generate_synth
from .trainer import LAMBDA_GRID, TrainConfig, TrainingDiverged, ablate_gate, predict_table, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONDITION = 2
EXIT_INTERNAL = 3

HISTORY_FIELDS = ("epoch", "step", "loss", "close_loss", "auc_loss", "gate_fraction", "open_pairs")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for audit preconditions here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fraction_arg(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _num(v):
    if v is None:
        return ""
    return repr(float(v))


# ---------------------------------------------------------------- evaluate

def cmd_evaluate(args) -> int:
    table = read_predictions(args.predictions)
    rep = evaluate_table(table, args.threshold, args.lambda_na, args.target_tpr, args.ties)
    print(rep.to_json() if args.json else rep.format_table())
    return EXIT_OK


# ------------------------------------------------------------------- curve

_CURVES = {
    ranking.CurveKind.ROC.value: ranking.roc_curve,
    ranking.CurveKind.OSCR.value: ranking.oscr_curve,
    ranking.CurveKind.OFPR_COTPR.value: ranking.ofpr_cotpr_curve,
}


def cmd_curve(args) -> int:
    table = read_predictions(args.predictions)
    write_curve(_CURVES[args.kind](table), sys.stdout)
    return EXIT_OK


# ------------------------------------------------------------------- sweep

def cmd_sweep(args) -> int:
    table = read_predictions(args.predictions)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    rows = sweep_rows(table, metrics, args.lambda_na)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["threshold", *metrics, "tpr_open", "fpr_open"])
    for row in rows:
        w.writerow([format_threshold(row["threshold"]), *(_num(row[m]) for m in metrics),
                    _num(row["tpr_open"]), _num(row["fpr_open"])])
    return EXIT_OK


# ------------------------------------------------------------------- audit

def adversarial_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".adv.csv")


def cmd_audit(args) -> int:
    construction = Construction(args.construction)
    kind = sniff_kind(args.input)
    if construction in (Construction.PROP1, Construction.PROP2):
        if kind == "decisions":
            dt = read_decisions(args.input)
        else:
            if args.threshold is None:
                raise UsageError(f"{construction.value} on a prediction file needs --threshold")
            dt = DecisionTable.from_scores(read_predictions(args.input), args.threshold)
        if construction is Construction.PROP1:
            rep = construct_prop1(dt, args.metric)
        else:
            rep = construct_prop2(dt, args.lambda_na)
    else:
        if kind == "decisions":
            raise UsageError(f"{construction.value} needs a prediction file with scores")
        table = read_predictions(args.input)
        if construction is Construction.PROP3:
            rep = construct_prop3(table)
        else:
            rep = verify_prop5(table, args.threshold)

    out = adversarial_path(args.input)
    if isinstance(rep.table_after, DecisionTable):
        write_decisions(rep.table_after, out)
    else:
        write_predictions(rep.table_after, out, include_r=True)
    doc = rep.to_dict()
    doc["adversarial_table"] = str(out)
    print(json.dumps(doc, indent=2))
    if rep.verdict is Verdict.CONDITION_NOT_MET:
        return EXIT_CONDITION
    if rep.verdict is Verdict.VIOLATED:
        return EXIT_INTERNAL
    return EXIT_OK


# ------------------------------------------------------------------- train

def write_history(history: list, dest) -> None:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_FIELDS)
        for row in history:
            w.writerow([repr(row[k]) for k in HISTORY_FIELDS])


def _synth_config(args) -> SynthConfig:
    return SynthConfig(
        num_known_classes=args.synth_known,
        num_open_classes=args.synth_open,
        samples_per_class=args.synth_samples,
        input_dim=args.synth_dim,
        class_center_spread=args.synth_spread,
        noise_sigma=args.synth_sigma,
        seed=args.seed if args.synth_seed is None else args.synth_seed,
    )


def _train_config(args, lam=None) -> TrainConfig:
    return TrainConfig(
        lam=args.lam if lam is None else lam,
        alpha=args.alpha,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
        hidden=args.hidden,
    )


def _openauc_of(result):
    v = result.report.scalars.get("openauc")
    return None if v is None else float(v)


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    synth = _synth_config(args)
    data = generate_synth(synth)
    config = _train_config(args)
    doc = {"config": asdict(config), "synth": asdict(synth)}

    if args.ablate_gate:
        ab = ablate_gate(data.train, config, data.test)
        result = ab.gated
        doc["ablation"] = {"gated_openauc": _openauc_of(ab.gated), "ungated_openauc": _openauc_of(ab.ungated)}
    else:
        result = train(data.train, config, data.test)

    if args.lambda_grid:
        doc["lambda_grid"] = {
            repr(lam): _openauc_of(train(data.train, _train_config(args, lam), data.test)) for lam in LAMBDA_GRID
        }

    table = predict_table(result.state.model, data.test)
    rep = evaluate_table(table, args.threshold)
    write_history(result.state.loss_history, out / "loss_history.csv")
    write_predictions(table, out / "predictions.csv")
    doc["report"] = rep.to_dict()
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(rep.format_table())
    if "ablation" in doc:
        print(f"ablation: gated openauc {doc['ablation']['gated_openauc']!r}, "
              f"ungated openauc {doc['ablation']['ungated_openauc']!r}")
    for lam, v in doc.get("lambda_grid", {}).items():
        print(f"lambda {lam}: openauc {v!r}")
    print(f"wrote {out / 'loss_history.csv'}, {out / 'predictions.csv'}, {out / 'report.json'}")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="openauc", description="Open-set recognition metrics, audits and a toy OpenAUC trainer.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("evaluate", help="all metrics for a prediction file")
    e.add_argument("predictions")
    e.add_argument("--threshold", type=float, action="append", default=[],
                   help="reject when r > THRESHOLD; repeatable")
    e.add_argument("--lambda-na", type=_fraction_arg, default=Fraction(1, 2))
    e.add_argument("--target-tpr", type=_fraction_arg, default=Fraction(19, 20))
    e.add_argument("--ties", choices=(ranking.STRICT, ranking.HALF), default=ranking.STRICT)
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("curve", help="curve points as x,y,threshold CSV")
    c.add_argument("predictions")
    c.add_argument("--kind", choices=sorted(_CURVES), required=True)
    c.set_defaults(func=cmd_curve)

    s = sub.add_parser("sweep", help="threshold-dependent metrics at every sweep threshold")
    s.add_argument("predictions")
    s.add_argument("--metrics", default="f_macro,youden,nacc",
                   help=f"comma-separated subset of {','.join(SWEEP_METRICS)}")
    s.add_argument("--lambda-na", type=_fraction_arg, default=Fraction(1, 2))
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("audit", help="run an adversarial construction against a table")
    a.add_argument("input", help="prediction or decision file")
    a.add_argument("--construction", choices=[k.value for k in Construction],
                   required=True)
    a.add_argument("--threshold", type=float, default=None)
    a.add_argument("--lambda-na", type=_fraction_arg, default=Fraction(1, 2))
    a.add_argument("--metric", default="fscore_macro", choices=("fscore_macro", "fscore_micro", "youden"))
    a.set_defaults(func=cmd_audit)

    t = sub.add_parser("train", help="train the MLP on a synthetic open-set task")
    t.add_argument("--lambda", dest="lam", type=float, default=0.2)
    t.add_argument("--alpha", type=float, default=2.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=60)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--hidden", type=int, default=32)
    t.add_argument("--synth-known", type=int, default=4)
    t.add_argument("--synth-open", type=int, default=2)
    t.add_argument("--synth-samples", type=int, default=200)
    t.add_argument("--synth-dim", type=int, default=2)
    t.add_argument("--synth-spread", type=float, default=3.0)
    t.add_argument("--synth-sigma", type=float, default=1.0)
    t.add_argument("--synth-seed", type=int, default=None, help="defaults to --seed")
    t.add_argument("--threshold", type=float, action="append", default=[])
    t.add_argument("--ablate-gate", action="store_true", help="also train without the correctness gate")
    t.add_argument("--lambda-grid", action="store_true", help=f"also report OpenAUC for lambda in {LAMBDA_GRID}")
    t.add_argument("--out", default="train_out")
    t.set_defaults(func=cmd_train)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    for name in ("lambda_na", "target_tpr"):
        if hasattr(args, name):
            setattr(args, name, as_fraction(getattr(args, name)))
    try:
        return args.func(args)
    except (MalformedInputError, UsageError, OSError, ValueError) as e:
        print(f"openauc: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (InternalConsistencyError, TrainingDiverged) as e:
        print(f"openauc: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
