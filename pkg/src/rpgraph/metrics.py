"""Classification metrics."""
from __future__ import annotations

from collections import Counter

import numpy as np
from scipy.stats import rankdata

__all__ = ["metric_accuracy", "metric_auc", "metric_mapped_accuracy",
           "majority_baseline"]


def _nonempty(*arrays):
    n = len(arrays[0])
    if n == 0:
        raise ValueError("empty input")
    if any(len(a) != n for a in arrays):
        raise ValueError("inputs differ in length")


def metric_accuracy(predictions, labels) -> float:
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    _nonempty(predictions, labels)
    return float(np.mean(predictions == labels))


def metric_auc(scores, labels) -> float:
    """ROC AUC as the Mann-Whitney U statistic; ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    _nonempty(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def metric_mapped_accuracy(predictions, labels) -> float:
    """Accuracy after relabeling each predicted cluster with the most
    frequent true label inside it."""
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    _nonempty(predictions, labels)
    hits = 0
    for cluster in np.unique(predictions):
        members = labels[predictions == cluster]
        hits += Counter(members.tolist()).most_common(1)[0][1]
    return hits / len(labels)


def majority_baseline(labels) -> float:
    """Accuracy of always predicting the most frequent label."""
    labels = np.asarray(labels)
    _nonempty(labels)
    return Counter(labels.tolist()).most_common(1)[0][1] / len(labels)
