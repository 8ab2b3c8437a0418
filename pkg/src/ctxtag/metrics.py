"""Classification and summarization metrics plus their CSV emitters.

Conventions: top-k ranks by probability with ties broken toward the lower
class index; label sets and relevance are thresholded at 0.5; label counts
are capped at 5 for the confusion matrix.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

THRESHOLD = 0.5
MAX_LABEL_COUNT = 5


@dataclass
class ClassificationMetrics:
    top1: float
    top3: float
    per_class_accuracy: np.ndarray  # (K,), nan for classes with no gold instances


@dataclass
class MetricsReport:
    loss: float
    top1: float
    top3: float
    per_class_accuracy: np.ndarray
    precision: float
    recall: float
    label_count_confusion: np.ndarray  # (6 x 6) ints, gold count x predicted count
    false_negative_rate: float


def _ranking(probs: np.ndarray) -> list[int]:
    return sorted(range(len(probs)), key=lambda c: (-probs[c], c))


def evaluate_classification(predictions, golds) -> ClassificationMetrics:
    """Top-1/top-3 hit rates and thresholded per-class accuracy.

    ``predictions`` is (N x K) probabilities; ``golds`` are nonempty label sets
    (the classifier is evaluated on relevant sentences only).
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    golds = [frozenset(g) for g in golds]
    if len(golds) != predictions.shape[0]:
        raise ValueError(f"evaluate_classification: {predictions.shape[0]} predictions vs {len(golds)} gold sets")
    n_classes = predictions.shape[1]
    for i, g in enumerate(golds):
        if not g:
            raise ValueError(f"evaluate_classification: empty gold label set at index {i}")
    top1_hits = 0
    top3_hits = 0
    class_hits = np.zeros(n_classes)
    class_totals = np.zeros(n_classes)
    for probs, gold in zip(predictions, golds):
        order = _ranking(probs)
        if order[0] in gold:
            top1_hits += 1
        if any(c in gold for c in order[:3]):
            top3_hits += 1
        predicted = {c for c in range(n_classes) if probs[c] >= THRESHOLD}
        for c in gold:
            class_totals[c] += 1
            if c in predicted:
                class_hits[c] += 1
    n = len(golds)
    with np.errstate(invalid="ignore"):
        per_class = class_hits / class_totals
    return ClassificationMetrics(
        top1=top1_hits / n if n else float("nan"),
        top3=top3_hits / n if n else float("nan"),
        per_class_accuracy=per_class,
    )


def evaluate_summarization(relevance_probs, gold_relevance):
    """Threshold-0.5 precision and recall; vacuous cases count as 1.0."""
    probs = np.asarray(relevance_probs, dtype=np.float64).reshape(-1)
    gold = np.asarray(gold_relevance, dtype=bool).reshape(-1)
    if probs.shape != gold.shape:
        raise ValueError(f"evaluate_summarization: {probs.shape[0]} predictions vs {gold.shape[0]} gold values")
    predicted = probs >= THRESHOLD
    tp = int(np.sum(predicted & gold))
    fp = int(np.sum(predicted & ~gold))
    fn = int(np.sum(~predicted & gold))
    precision = tp / (tp + fp) if (tp + fp) else 1.0
    recall = tp / (tp + fn) if (tp + fn) else 1.0
    return precision, recall


def label_count_confusion(predictions, golds):
    """(6 x 6) matrix of gold vs predicted label counts (capped at 5) and the
    false-negative rate: labelled sentences predicted to have zero labels."""
    predictions = np.asarray(predictions, dtype=np.float64)
    golds = [frozenset(g) for g in golds]
    if len(golds) != predictions.shape[0]:
        raise ValueError("label_count_confusion: prediction/gold length mismatch")
    matrix = np.zeros((MAX_LABEL_COUNT + 1, MAX_LABEL_COUNT + 1), dtype=np.int64)
    labelled = 0
    missed = 0
    for probs, gold in zip(predictions, golds):
        pred_count = min(int(np.sum(probs >= THRESHOLD)), MAX_LABEL_COUNT)
        gold_count = min(len(gold), MAX_LABEL_COUNT)
        matrix[gold_count, pred_count] += 1
        if len(gold) >= 1:
            labelled += 1
            if pred_count == 0:
                missed += 1
    fnr = missed / labelled if labelled else 0.0
    return matrix, fnr


def build_report(loss: float, label_probs, label_golds, relevance_probs, relevance_golds) -> MetricsReport:
    cls = evaluate_classification(label_probs, label_golds)
    precision, recall = evaluate_summarization(relevance_probs, relevance_golds)
    confusion, fnr = label_count_confusion(label_probs, label_golds)
    return MetricsReport(
        loss=loss,
        top1=cls.top1,
        top3=cls.top3,
        per_class_accuracy=cls.per_class_accuracy,
        precision=precision,
        recall=recall,
        label_count_confusion=confusion,
        false_negative_rate=fnr,
    )


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return ""
    return repr(float(value)) if isinstance(value, float) else str(value)


def write_scalar_metrics_csv(path, metrics: dict):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for key, value in metrics.items():
            writer.writerow([key, _fmt(value)])


def write_per_class_csv(path, classes, per_class_accuracy):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "accuracy"])
        for name, acc in zip(classes, per_class_accuracy):
            writer.writerow([name, _fmt(float(acc))])


def write_confusion_csv(path, matrix: np.ndarray):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gold_count"] + [f"pred_{j}" for j in range(matrix.shape[1])])
        for i in range(matrix.shape[0]):
            writer.writerow([i] + [int(v) for v in matrix[i]])


def write_history_csv(path, history):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            writer.writerow([row.epoch, _fmt(row.train_loss), _fmt(row.val_loss)])
