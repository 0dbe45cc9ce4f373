"""CSV formats for prediction tables, decision tables and curves.

Prediction file::

    # convention=open_high            (optional; or confidence_high)
    id,label,score_0,...,score_{C-1}[,r]

Decision file::

    id,label,prediction

Labels and predictions use ``-1`` for the open class.
"""
from __future__ import annotations

import csv
import io
import math
import re
from pathlib import Path
from typing import TextIO, Union

import numpy as np

from .audit import DecisionTable
from .core import FILE_OPEN, MalformedInputError, ScoreConvention, ScoreTable
from .ranking import Curve

_DIRECTIVE = re.compile(r"^#\s*convention\s*=\s*(\w+)\s*$")
_SCORE_COL = re.compile(r"^score_(\d+)$")

PathOrText = Union[str, Path, TextIO]


class ParseError(MalformedInputError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _lines(source: PathOrText) -> list:
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text()
    return text.splitlines()


def _rows(lines):
    """Yield ``(line_number, fields)`` for non-blank lines, 1-based."""
    for n, line in enumerate(lines, start=1):
        if line.strip():
            yield n, next(csv.reader([line]))


def _parse_float(text: str, line: int, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{what}: not a number: {text!r}", line) from None
    if not math.isfinite(v):
        raise ParseError(f"{what}: non-finite value {text!r}", line)
    return v


def _parse_int(text: str, line: int, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{what}: not an integer: {text!r}", line) from None


def sniff_kind(source: PathOrText) -> str:
    """``"decisions"`` for an ``id,label,prediction`` header, else ``"predictions"``."""
    for _, fields in _rows(l for l in _lines(source) if not l.startswith("#")):
        return "decisions" if [f.strip() for f in fields] == ["id", "label", "prediction"] else "predictions"
    raise ParseError("empty file", 1)


def read_predictions(source: PathOrText) -> ScoreTable:
    lines = _lines(source)
    convention = ScoreConvention.OPEN_HIGH
    start = 0
    if lines and lines[0].startswith("#"):
        m = _DIRECTIVE.match(lines[0].strip())
        if not m:
            raise ParseError(f"unrecognised directive {lines[0]!r}", 1)
        try:
            convention = ScoreConvention(m.group(1))
        except ValueError:
            raise ParseError(f"unknown convention {m.group(1)!r}", 1) from None
        start = 1
    rows = list(_rows(lines[start:]))
    if not rows:
        raise ParseError("missing header", start + 1)
    header_line, header = rows[0]
    header_line += start
    header = [h.strip() for h in header]
    if header[:2] != ["id", "label"]:
        raise ParseError("header must start with id,label", header_line)
    has_r = header[-1] == "r"
    score_cols = header[2:-1] if has_r else header[2:]
    for k, name in enumerate(score_cols):
        m = _SCORE_COL.match(name)
        if not m or int(m.group(1)) != k:
            raise ParseError(f"expected column score_{k}, found {name!r}", header_line)
    c = len(score_cols)
    if c < 1:
        raise ParseError("no score columns", header_line)
    ids, labels, scores, rs = [], [], [], []
    for n, fields in rows[1:]:
        n += start
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} columns, found {len(fields)}", n)
        ids.append(fields[0].strip())
        lab = _parse_int(fields[1], n, "label")
        if lab != FILE_OPEN and not 0 <= lab < c:
            raise ParseError(f"label {lab} outside 0..{c - 1} and not -1", n)
        labels.append(lab)
        scores.append([_parse_float(f, n, f"score_{k}") for k, f in enumerate(fields[2 : 2 + c])])
        if has_r:
            rs.append(_parse_float(fields[-1], n, "r"))
    return ScoreTable.from_arrays(
        labels,
        np.array(scores, dtype=float).reshape(len(ids), c),
        rs if has_r else None,
        num_known_classes=c,
        convention=convention,
        ids=ids,
        open_label=FILE_OPEN,
    )


def write_predictions(table: ScoreTable, dest: PathOrText, include_r: bool = False) -> None:
    """Write ``table``; floats use ``repr`` so reading back is lossless."""
    buf = io.StringIO()
    if table.convention is not ScoreConvention.OPEN_HIGH:
        buf.write(f"# convention={table.convention.value}\n")
    w = csv.writer(buf, lineterminator="\n")
    c = table.num_known_classes
    w.writerow(["id", "label", *[f"score_{k}" for k in range(c)], *(["r"] if include_r else [])])
    for i, lab, s, r in zip(table.ids, table.file_labels(), table.class_scores, table.open_scores):
        w.writerow([i, int(lab), *map(repr, s.tolist()), *([repr(float(r))] if include_r else [])])
    _emit(buf.getvalue(), dest)


def read_decisions(source: PathOrText, num_known_classes: int = None) -> DecisionTable:
    """Parse a decision file; ``C`` defaults to ``max(label, prediction) + 1``."""
    rows = list(_rows(l for l in _lines(source)))
    if not rows:
        raise ParseError("missing header", 1)
    n0, header = rows[0]
    if [h.strip() for h in header] != ["id", "label", "prediction"]:
        raise ParseError("header must be id,label,prediction", n0)
    ids, labels, preds = [], [], []
    for n, fields in rows[1:]:
        if len(fields) != 3:
            raise ParseError(f"expected 3 columns, found {len(fields)}", n)
        ids.append(fields[0].strip())
        for value, bucket, what in ((fields[1], labels, "label"), (fields[2], preds, "prediction")):
            v = _parse_int(value, n, what)
            if v < FILE_OPEN:
                raise ParseError(f"{what} {v} is negative and not -1", n)
            bucket.append(v)
    if num_known_classes is None:
        num_known_classes = max([*labels, *preds, 0]) + 1
    return DecisionTable.from_arrays(labels, preds, num_known_classes, ids=ids, open_label=FILE_OPEN)


def write_decisions(table: DecisionTable, dest: PathOrText) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "label", "prediction"])
    labels, preds = table.file_columns()
    for i, lab, p in zip(table.ids, labels, preds):
        w.writerow([i, int(lab), int(p)])
    _emit(buf.getvalue(), dest)


def format_threshold(t: float) -> str:
    if math.isinf(t):
        return "inf" if t > 0 else "-inf"
    return repr(float(t))


def write_curve(curve: Curve, dest: PathOrText) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "threshold"])
    for x, y, t in curve.points:
        w.writerow([repr(x), repr(y), format_threshold(t)])
    _emit(buf.getvalue(), dest)


def _emit(text: str, dest: PathOrText) -> None:
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text)
