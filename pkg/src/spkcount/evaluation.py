"""Confusion-matrix metrics and the per-duration comparison harness."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

CLASS_NAMES = ("non-speech", "1-speaker", "2-speaker", "3-speaker")
N_CLASSES = 4


class ConfusionMatrix:
    """4x4 counts; rows are true classes, columns predictions."""

    def __init__(self, counts=None):
        if counts is None:
            counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
        counts = np.array(counts, dtype=np.int64)
        if counts.shape != (N_CLASSES, N_CLASSES) or np.any(counts < 0):
            raise ValueError("confusion matrix must be 4x4 with nonnegative counts")
        self.counts = counts

    def accumulate(self, true: int, pred: int) -> "ConfusionMatrix":
        for v in (true, pred):
            if not 0 <= int(v) < N_CLASSES:
                raise ValueError(f"label {v} outside 0..{N_CLASSES - 1}")
        self.counts[int(true), int(pred)] += 1
        return self

    @classmethod
    def from_labels(cls, true, pred) -> "ConfusionMatrix":
        cm = cls()
        for t, p in zip(true, pred):
            cm.accumulate(t, p)
        return cm

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_text(self) -> str:
        return "\n".join(" ".join(str(int(v)) for v in row) for row in self.counts) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ConfusionMatrix":
        return cls([[int(v) for v in line.split()] for line in text.strip().splitlines()])

    def __repr__(self):
        return f"ConfusionMatrix({self.counts.tolist()})"


def accumulate(cm: ConfusionMatrix, true: int, pred: int) -> ConfusionMatrix:
    return cm.accumulate(true, pred)


@dataclass
class MetricsReport:
    accuracy: float
    weighted_accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    # classes whose precision / recall had a zero denominator (reported as 0)
    undefined_precision: tuple[int, ...] = ()
    undefined_recall: tuple[int, ...] = ()
    confusion: ConfusionMatrix = field(default_factory=ConfusionMatrix)

    def summary_row(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "weighted_accuracy": self.weighted_accuracy,
            "precision": self.macro_precision,
            "recall": self.macro_recall,
            "f1": self.macro_f1,
        }


def _safe_div(num, den):
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(den)
    np.divide(num, den, out=out, where=den > 0)
    return out


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    c = cm.counts.astype(np.float64)
    total = c.sum()
    if total == 0:
        raise ValueError("cannot compute metrics on an empty confusion matrix")
    diag = np.diag(c)
    rows, cols = c.sum(axis=1), c.sum(axis=0)
    recall = _safe_div(diag, rows)
    precision = _safe_div(diag, cols)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return MetricsReport(
        accuracy=float(diag.sum() / total),
        weighted_accuracy=float(recall.mean()),
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        undefined_precision=tuple(int(i) for i in np.flatnonzero(cols == 0)),
        undefined_recall=tuple(int(i) for i in np.flatnonzero(rows == 0)),
        confusion=ConfusionMatrix(cm.counts.copy()),
    )


def evaluate_model(model, features, labels, frames_per_segment: int | None = None):
    """Argmax predictions over a featurised test set -> (MetricsReport, ConfusionMatrix).

    ``features`` is (N, T, n_mels). Segments shorter than the conv kernel
    cannot be classified and raise.
    """
    features = np.asarray(features)
    if features.ndim != 3:
        raise ValueError(f"expected (N, T, n_mels) features, got {features.shape}")
    if frames_per_segment is not None and features.shape[1] != frames_per_segment:
        raise ValueError(f"features have {features.shape[1]} frames, expected {frames_per_segment}")
    min_frames = model.config.kernel[0] // 2 + 1
    if features.shape[1] < min_frames:
        raise ValueError(f"segments of {features.shape[1]} frames are below the model minimum of {min_frames}")
    pred = model.predict(features)
    cm = ConfusionMatrix.from_labels(labels, pred)
    return compute_metrics(cm), cm


# ------------------------------------------------------------ reporting


def format_report(report: MetricsReport, title: str = "") -> str:
    out = io.StringIO()
    if title:
        out.write(f"{title}\n")
    out.write(f"{'accuracy':>18} {100 * report.accuracy:6.2f}%\n")
    out.write(f"{'weighted accuracy':>18} {100 * report.weighted_accuracy:6.2f}%\n")
    out.write(f"{'precision':>18} {100 * report.macro_precision:6.2f}%\n")
    out.write(f"{'recall':>18} {100 * report.macro_recall:6.2f}%\n")
    out.write(f"{'F-score':>18} {100 * report.macro_f1:6.2f}%\n\n")
    out.write(f"{'class':<12}{'precision':>10}{'recall':>10}{'F-score':>10}\n")
    for i, name in enumerate(CLASS_NAMES):
        flag = " *" if i in report.undefined_precision or i in report.undefined_recall else ""
        out.write(f"{name:<12}{100 * report.precision[i]:9.2f}%{100 * report.recall[i]:9.2f}%"
                  f"{100 * report.f1[i]:9.2f}%{flag}\n")
    if report.undefined_precision or report.undefined_recall:
        out.write("* undefined (zero denominator), reported as 0\n")
    out.write("\nconfusion matrix (rows = true, columns = predicted)\n")
    out.write(report.confusion.to_text())
    return out.getvalue()


def report_csv(report: MetricsReport) -> str:
    out = io.StringIO()
    w = csv.writer(out)
    w.writerow(["scope", "precision", "recall", "f1", "accuracy", "weighted_accuracy"])
    w.writerow(["macro", report.macro_precision, report.macro_recall, report.macro_f1,
                report.accuracy, report.weighted_accuracy])
    for i, name in enumerate(CLASS_NAMES):
        w.writerow([name, report.precision[i], report.recall[i], report.f1[i], "", ""])
    return out.getvalue()


# --------------------------------------------------------- duration sweep


@dataclass
class SweepTable:
    frames: list[int]
    methods: tuple[str, str]
    reports: dict[tuple[int, str], MetricsReport]

    def weighted_accuracy(self, frames: int, method: str) -> float:
        return self.reports[(frames, method)].weighted_accuracy

    def to_text(self) -> str:
        a, b = self.methods
        lines = [f"{'frames':>6} {a:>12} {b:>12}"]
        for n in self.frames:
            lines.append(f"{n:>6} {100 * self.weighted_accuracy(n, a):11.2f}% {100 * self.weighted_accuracy(n, b):11.2f}%")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out)
        w.writerow(["frames", "method", "class", "precision", "recall", "weighted_accuracy"])
        for n in self.frames:
            for m in self.methods:
                r = self.reports[(n, m)]
                w.writerow([n, m, "macro", r.macro_precision, r.macro_recall, r.weighted_accuracy])
                for i, name in enumerate(CLASS_NAMES):
                    w.writerow([n, m, name, r.precision[i], r.recall[i], ""])
        return out.getvalue()


def duration_sweep(model_a, model_b, test_sets, frame_list, methods=("attention", "avgpool")) -> SweepTable:
    """Weighted accuracy of two models per segment duration.

    ``model_a``/``model_b`` are either single models (applied to every
    duration) or dicts keyed by frame count. ``test_sets`` maps frame count
    to ``(features, labels)``.
    """
    reports = {}
    for n in frame_list:
        x, y = test_sets[n]
        for name, model in zip(methods, (model_a, model_b)):
            m = model[n] if isinstance(model, dict) else model
            reports[(n, name)] = evaluate_model(m, x, y, n)[0]
    return SweepTable(list(frame_list), tuple(methods), reports)
