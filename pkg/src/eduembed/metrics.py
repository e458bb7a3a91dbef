"""Scoring: accuracy, rank-based AUC, and the Degree of Agreement.

The AUC here is the Mann-Whitney statistic computed from average ranks
(ties count one half), an O(n log n) sort-based route that the test suite
cross-checks against an O(n^2) all-pairs oracle.  The DOA follows the
per-concept rank-consistency construction: ordered student pairs where
the diagnosed mastery is strictly greater, scored by how often the
higher-mastery student beats the lower one on commonly answered
exercises of that concept.
"""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, to_score_matrix

__all__ = ["acc", "auc", "doa", "MetricError"]


class MetricError(ValueError):
    """Metric undefined for the given inputs."""


def _check_pair(preds, labels):
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels)
    if preds.ndim != 1 or labels.shape != preds.shape:
        raise ValueError("preds and labels must be equal-length 1-d arrays")
    if preds.size == 0:
        raise MetricError("empty input")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return preds, labels.astype(np.int64)


def acc(preds, labels, threshold: float = 0.5) -> float:
    """Fraction of predictions on the correct side of the threshold.

    A prediction exactly at the threshold counts as positive.
    """
    preds, labels = _check_pair(preds, labels)
    return float(np.mean((preds >= threshold).astype(np.int64) == labels))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged, via a single stable sort."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(preds, labels) -> float:
    """Mann-Whitney AUC: P(pred_pos > pred_neg) + 0.5 P(tie)."""
    preds, labels = _check_pair(preds, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined: labels contain a single class")
    ranks = _average_ranks(preds)
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def doa(mastery: np.ndarray, corpus: Corpus, response_rows=None) -> float:
    """Degree of Agreement between diagnosed mastery and observed wins.

    For each concept k, over ordered student pairs (a, b) with strictly
    greater mastery of a on k, count exercises of concept k answered by
    both: the pair contributes (#a-correct-and-b-wrong) / (#responses
    differ).  Pairs whose denominator is zero are skipped; the concept
    value is the mean over surviving pairs, and the result is the
    unweighted mean over concepts that kept at least one pair.

    Duplicate logs are collapsed (last wins) before counting.  ``response_rows``
    restricts the observed responses to a subset of the log, e.g. the
    test split.
    """
    mastery = np.asarray(mastery, dtype=np.float64)
    if mastery.shape != (corpus.num_students, corpus.num_concepts):
        raise ValueError(
            f"mastery shape {mastery.shape} != ({corpus.num_students}, {corpus.num_concepts})")
    base = corpus if response_rows is None else _subset(corpus, response_rows)
    dense = to_score_matrix(base).dense

    concept_values = []
    for k in range(corpus.num_concepts):
        items = np.flatnonzero(corpus.q_matrix[:, k])
        if len(items) == 0:
            continue
        sub = dense[:, items]
        present = sub >= 0
        correct = (sub == 1) & present
        wrong = (sub == 0) & present
        # num[a, b]: a correct and b wrong on a commonly answered item
        num = correct.astype(np.float64) @ wrong.astype(np.float64).T
        den = num + num.T
        greater = mastery[:, k][:, None] > mastery[:, k][None, :]
        valid = greater & (den > 0)
        if not valid.any():
            continue
        concept_values.append(float(np.mean(num[valid] / den[valid])))
    if not concept_values:
        raise MetricError("DOA undefined: no concept has a valid student pair")
    return float(np.mean(concept_values))


def _subset(corpus: Corpus, rows):
    from .corpus import subset_responses

    return subset_responses(corpus, rows)
