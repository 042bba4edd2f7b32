"""Accuracy, support-weighted F1, macro one-vs-rest ROC AUC, confusion
matrices, and per-epoch curve export.

AUC per class is rank-based (Mann-Whitney) with tied scores counted as
half, macro-averaged over the classes that actually occur; weighted F1
uses the 0/0 -> 0 per-class convention.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import EMOTION_LABELS, make_batches
from .model import ModelConfig, ModelParams, effective_fusion_weights, forward_batch

N_CLASSES = len(EMOTION_LABELS)


class MetricError(ValueError):
    """Metric undefined on this input (empty, or too few classes)."""


def _as_int_arrays(preds, labels):
    p = np.asarray(preds, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if p.size == 0 or y.size == 0:
        raise MetricError("metrics need at least one sample")
    if p.shape != y.shape:
        raise MetricError(f"preds shape {p.shape} != labels shape {y.shape}")
    return p, y


def accuracy(preds, labels) -> float:
    p, y = _as_int_arrays(preds, labels)
    return float((p == y).mean())


def confusion_matrix(preds, labels, n_classes: int = N_CLASSES) -> np.ndarray:
    """Counts indexed [true, predicted]."""
    p, y = _as_int_arrays(preds, labels)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y, p), 1)
    return cm


def per_class_prf(cm: np.ndarray):
    """(precision, recall, f1, support) vectors with 0/0 -> 0."""
    tp = np.diag(cm).astype(np.float64)
    pred_tot = cm.sum(axis=0).astype(np.float64)
    true_tot = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, pred_tot, out=np.zeros_like(tp), where=pred_tot > 0)
    recall = np.divide(tp, true_tot, out=np.zeros_like(tp), where=true_tot > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros_like(tp), where=pr > 0)
    return precision, recall, f1, true_tot.astype(np.int64)


def weighted_f1(preds, labels) -> float:
    cm = confusion_matrix(preds, labels)
    _, _, f1, support = per_class_prf(cm)
    total = support.sum()
    return float((f1 * support).sum() / total)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i: j + 1]] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1
    return ranks


def binary_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Rank-based ROC AUC of scores for the boolean positive mask."""
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("binary AUC needs both positives and negatives")
    ranks = _average_ranks(np.asarray(scores, dtype=np.float64))
    return float((ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def macro_auc(probs, labels) -> float:
    """Macro one-vs-rest AUC over the classes present in labels."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if p.ndim != 2 or p.shape[0] != y.shape[0]:
        raise MetricError(f"probs shape {p.shape} inconsistent with {y.shape}")
    present = np.unique(y)
    if len(present) < 2:
        raise MetricError("macro AUC undefined with fewer than 2 classes present")
    return float(np.mean([binary_auc(p[:, c], y == c) for c in present]))


@dataclass
class EvalReport:
    accuracy: float
    weighted_f1: float
    macro_auc: float
    per_class: list       # one dict per label: precision/recall/f1/support
    confusion: list       # 7x7 counts, rows = true
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "macro_auc": self.macro_auc,
            "per_class": self.per_class,
            "confusion": self.confusion,
            "n_samples": self.n_samples,
        }


def report_from_probs(probs: np.ndarray, labels: np.ndarray) -> EvalReport:
    preds = probs.argmax(axis=1)
    cm = confusion_matrix(preds, labels)
    precision, recall, f1, support = per_class_prf(cm)
    per_class = [
        {
            "label": EMOTION_LABELS[c],
            "precision": float(precision[c]),
            "recall": float(recall[c]),
            "f1": float(f1[c]),
            "support": int(support[c]),
        }
        for c in range(N_CLASSES)
    ]
    return EvalReport(
        accuracy=accuracy(preds, labels),
        weighted_f1=float((f1 * support).sum() / support.sum()),
        macro_auc=macro_auc(probs, labels),
        per_class=per_class,
        confusion=cm.tolist(),
        n_samples=int(len(labels)),
    )


def predict_probs(params: ModelParams, cfg: ModelConfig, samples: list,
                  batch_size: int = 16, mode: str = "full") -> np.ndarray:
    """Deterministic full-split forward (dropout off, original order)."""
    if not samples:
        raise MetricError("cannot evaluate an empty split")
    rows = []
    for batch in make_batches(samples, batch_size):
        probs, _ = forward_batch(batch, params, cfg, training=False, mode=mode)
        rows.append(probs.data)
    return np.concatenate(rows, axis=0)


def evaluate(params: ModelParams, cfg: ModelConfig, samples: list,
             batch_size: int = 16, mode: str = "full") -> EvalReport:
    probs = predict_probs(params, cfg, samples, batch_size, mode)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return report_from_probs(probs, labels)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_accuracy: float
    val_weighted_f1: float
    val_macro_auc: float
    alpha: float
    beta: float
    chi: float
    seconds: float


CURVE_HEADER = ["epoch", "train_loss", "val_acc", "val_f1", "val_auc",
                "alpha", "beta", "chi", "seconds"]


def export_epoch_curve(logs: list, path) -> None:
    """CSV reconstruction of the per-epoch metric curves."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_HEADER)
        for log in logs:
            writer.writerow([
                log.epoch, repr(log.train_loss), repr(log.val_accuracy),
                repr(log.val_weighted_f1), repr(log.val_macro_auc),
                repr(log.alpha), repr(log.beta), repr(log.chi),
                repr(log.seconds),
            ])


def fusion_weights_for_log(params: ModelParams, mode: str) -> tuple:
    w = effective_fusion_weights(params, mode)
    return float(w[0]), float(w[1]), float(w[2])
