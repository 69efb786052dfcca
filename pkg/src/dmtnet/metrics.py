"""Classification metrics and the evaluation report."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np


def confusion_matrix(y_true, y_pred, classes):
    """Counts with true classes on rows and predicted classes on columns."""
    cm = np.zeros((classes, classes), dtype=np.int64)
    for t, p in zip(np.asarray(y_true, dtype=np.intp), np.asarray(y_pred, dtype=np.intp)):
        cm[t, p] += 1
    return cm


def precision_recall(cm):
    """Per-class precision and recall; a class never predicted (or never
    present) scores 0 rather than NaN."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    return precision, recall


@dataclass
class EvalReport:
    class_names: list
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    accuracy: float
    wall_clock_seconds: float = 0.0
    config: dict = field(default_factory=dict)

    @property
    def support(self):
        return self.confusion.sum(axis=1)

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "class_names": list(self.class_names),
            "precision": [float(v) for v in self.precision],
            "recall": [float(v) for v in self.recall],
            "support": [int(v) for v in self.support],
            "confusion": self.confusion.tolist(),
            "wall_clock_seconds": self.wall_clock_seconds,
            "config": self.config,
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_confusion_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.class_names)
            for row in self.confusion:
                writer.writerow([int(v) for v in row])

    def write_metrics_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "precision", "recall", "support"])
            for name, p, r, n in zip(self.class_names, self.precision, self.recall, self.support):
                writer.writerow([name, f"{p:.6f}", f"{r:.6f}", int(n)])
            writer.writerow(["overall_accuracy", f"{self.accuracy:.6f}", "", int(self.support.sum())])

    def format_table(self):
        width = max(8, max(len(n) for n in self.class_names))
        lines = [f"{'class':<{width}}  precision  recall  support"]
        for name, p, r, n in zip(self.class_names, self.precision, self.recall, self.support):
            lines.append(f"{name:<{width}}  {p:9.4f}  {r:6.4f}  {int(n):7d}")
        lines.append(f"accuracy {self.accuracy:.4f} over {int(self.support.sum())} samples")
        return "\n".join(lines)


def read_confusion_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[int(v) for v in row] for row in rows[1:]], dtype=np.int64)


def build_eval_report(y_true, y_pred, class_names, wall_clock=0.0, config=None):
    cm = confusion_matrix(y_true, y_pred, len(class_names))
    precision, recall = precision_recall(cm)
    total = cm.sum()
    acc = float(np.trace(cm) / total) if total else 0.0
    return EvalReport(list(class_names), cm, precision, recall, acc, wall_clock, config or {})
