"""Precision / recall / f-measure and the comparison table."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f_measure: float

    def to_json(self) -> dict:
        return asdict(self)


def f_measure(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int = 0) -> Metrics:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return Metrics(tp, fp, fn, tn, precision, recall, f_measure(precision, recall))


def compute_metrics(predictions) -> Metrics:
    """Confusion counts from ``(probability, label)`` pairs, thresholded at 0.5 inclusive."""
    predictions = list(predictions)
    if not predictions:
        raise ValueError("compute_metrics needs at least one prediction")
    tp = fp = fn = tn = 0
    for prob, label in predictions:
        predicted = prob >= 0.5
        if predicted and label:
            tp += 1
        elif predicted:
            fp += 1
        elif label:
            fn += 1
        else:
            tn += 1
    return metrics_from_counts(tp, fp, fn, tn)


@dataclass(frozen=True)
class ComparisonRow:
    approach: str
    precision: float
    recall: float
    f_measure: float
    source: str = "this-artifact"


# Reported results on IR-Plag, kept verbatim and tagged so they never mix with measured rows.
PAPER_ROWS = (
    ComparisonRow("CodeBERT", 0.72, 1.00, 0.84, "paper"),
    ComparisonRow("Output Analysis", 0.88, 0.93, 0.90, "paper"),
    ComparisonRow("Boosting (XGBoost)", 0.88, 0.99, 0.93, "paper"),
    ComparisonRow("Bagging (Random Forest)", 0.95, 0.97, 0.96, "paper"),
    ComparisonRow("GraphCodeBERT", 0.98, 0.95, 0.96, "paper"),
    ComparisonRow("GraphCodeBERT + output feature", 0.98, 1.00, 0.99, "paper"),
)

CSV_COLUMNS = ("approach", "precision", "recall", "f_measure", "source")


def table_rows(rows=()) -> list:
    """Paper rows then measured rows, stably sorted by f-measure ascending (best last)."""
    return sorted([*PAPER_ROWS, *rows], key=lambda r: r.f_measure)


def compare_table(rows=(), fmt: str = "markdown") -> str:
    ordered = table_rows(rows)
    if fmt in ("csv",):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in ordered:
            writer.writerow([r.approach, repr(r.precision), repr(r.recall), repr(r.f_measure), r.source])
        return buf.getvalue()
    if fmt not in ("markdown", "md"):
        raise ValueError(f"unknown table format {fmt!r}")
    lines = [
        "| Approach | precision | recall | f-measure | source |",
        "|---|---|---|---|---|",
    ]
    for r in ordered:
        lines.append(f"| {r.approach} | {r.precision:.2f} | {r.recall:.2f} | {r.f_measure:.2f} | {r.source} |")
    return "\n".join(lines) + "\n"


def parse_csv_table(text: str) -> list:
    reader = csv.DictReader(io.StringIO(text))
    return [
        ComparisonRow(row["approach"], float(row["precision"]), float(row["recall"]),
                      float(row["f_measure"]), row["source"])
        for row in reader
    ]
