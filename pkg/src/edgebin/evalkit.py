"""Confusion matrices and the accuracy / precision / recall report."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, UnknownLabel
from .ir import BIN_LABELS


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed ``[true][predicted]``."""

    counts: np.ndarray
    labels: tuple[str, ...] = BIN_LABELS

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape != (len(self.labels), len(self.labels)):
            raise ValueError(f"counts shape {c.shape} does not match {len(self.labels)} labels")
        if (c < 0).any():
            raise ValueError("counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.labels != other.labels:
            raise ValueError("cannot merge matrices with different label orders")
        return ConfusionMatrix(self.counts + other.counts, self.labels)

    def __add__(self, other):
        return self.merge(other)

    def permuted(self, labels) -> "ConfusionMatrix":
        """Same matrix with rows/columns reordered to ``labels``."""
        idx = [self.labels.index(lab) for lab in labels]
        return ConfusionMatrix(self.counts[np.ix_(idx, idx)], tuple(labels))

    def to_json(self):
        return {"labels": list(self.labels), "counts": self.counts.tolist()}


def confusion(preds, truths, labels=BIN_LABELS) -> ConfusionMatrix:
    preds, truths = list(preds), list(truths)
    if len(preds) != len(truths):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(truths)} truths")
    if not preds:
        raise LengthMismatch("need at least one prediction")
    index = {lab: i for i, lab in enumerate(labels)}
    for lab in (*preds, *truths):
        if lab not in index:
            raise UnknownLabel(f"label {lab!r} not in {tuple(labels)}")
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    np.add.at(counts, ([index[t] for t in truths], [index[p] for p in preds]), 1)
    return ConfusionMatrix(counts, tuple(labels))


@dataclass(frozen=True)
class Metrics:
    top1_accuracy: float
    per_class_precision: list
    macro_precision: float
    per_class_recall: list
    labels: tuple[str, ...]
    undefined_precision: list
    support: list

    def to_json(self):
        return {
            "labels": list(self.labels),
            "top1_accuracy": self.top1_accuracy,
            "per_class_precision": self.per_class_precision,
            "macro_precision": self.macro_precision,
            "per_class_recall": self.per_class_recall,
            "undefined_precision": self.undefined_precision,
            "support": self.support,
        }


def _ratio(num, den):
    return float(num / den) if den else None


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Top-1 accuracy, precision per predicted column, recall (sensitivity)
    per true row. A class never predicted has undefined precision: it is
    reported as None and left out of the macro average."""
    c = cm.counts
    if cm.total < 1:
        raise ValueError("confusion matrix is empty")
    diag = np.diag(c)
    cols, rows = c.sum(axis=0), c.sum(axis=1)
    precision = [_ratio(diag[i], cols[i]) for i in range(len(cm.labels))]
    recall = [_ratio(diag[i], rows[i]) for i in range(len(cm.labels))]
    defined = [p for p in precision if p is not None]
    macro = float(np.mean(defined)) if defined else None
    undefined = [lab for lab, p in zip(cm.labels, precision) if p is None]
    return Metrics(float(diag.sum() / cm.total), precision, macro, recall, cm.labels,
                   undefined, rows.tolist())


def _pct(v):
    return "   n/a" if v is None else f"{100 * v:6.2f}"


def format_table(cm: ConfusionMatrix, m: Metrics | None = None) -> str:
    """Aligned text table: the matrix plus per-class precision/recall."""
    m = m or metrics(cm)
    corner = "true\\pred"
    width = max(len(corner), *(len(lab) for lab in cm.labels))
    head = f"{corner:>{width}} | " + " ".join(f"{lab:>{width}}" for lab in cm.labels)
    lines = [head, "-" * len(head)]
    for lab, row in zip(cm.labels, cm.counts):
        lines.append(f"{lab:>{width}} | " + " ".join(f"{v:>{width}d}" for v in row))
    lines.append("")
    lines.append(f"{'class':>{width}}  precision%  recall%  support")
    for lab, p, r, s in zip(cm.labels, m.per_class_precision, m.per_class_recall, m.support):
        lines.append(f"{lab:>{width}}     {_pct(p)}   {_pct(r)}  {s:7d}")
    lines.append("")
    lines.append(f"top-1 accuracy  {_pct(m.top1_accuracy)}%")
    lines.append(f"macro precision {_pct(m.macro_precision)}%")
    return "\n".join(lines)


def read_predictions(path):
    """CSV with ``truth,pred`` columns -> (truths, preds)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and not {"truth", "pred"} <= set(rows[0]):
        raise ValueError(f"{path}: expected columns truth,pred")
    return [r["truth"].strip() for r in rows], [r["pred"].strip() for r in rows]
