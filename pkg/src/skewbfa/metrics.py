"""Partition agreement metrics: adjusted Rand index and misclassification rate."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linear_sum_assignment

EXHAUSTIVE_LIMIT = 8


def _contingency(truth, pred):
    truth = np.asarray(truth).ravel()
    pred = np.asarray(pred).ravel()
    if truth.shape != pred.shape:
        raise ValueError(
            f"partition lengths differ: {truth.shape[0]} vs {pred.shape[0]}"
        )
    if truth.size == 0:
        raise ValueError("partitions must be nonempty")
    _, t_codes = np.unique(truth, return_inverse=True)
    _, p_codes = np.unique(pred, return_inverse=True)
    table = np.zeros((t_codes.max() + 1, p_codes.max() + 1), dtype=np.int64)
    np.add.at(table, (t_codes, p_codes), 1)
    return table


def ari(truth, pred):
    """Adjusted Rand index between two partitions of the same items.

    1 for identical partitions, 0 expected under independent random
    labelling; degenerate identical structure (both all-singleton or both
    one-cluster) counts as perfect agreement.
    """
    table = _contingency(truth, pred)

    def choose2(counts):
        return (counts * (counts - 1) // 2).sum()

    index = choose2(table)
    row_pairs = choose2(table.sum(axis=1))
    col_pairs = choose2(table.sum(axis=0))
    total_pairs = table.sum() * (table.sum() - 1) // 2
    expected = row_pairs * col_pairs / total_pairs if total_pairs else 0.0
    max_index = 0.5 * (row_pairs + col_pairs)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def mcr(truth, pred):
    """Misclassification rate under the best bijection between label sets.

    Exhaustive over label permutations for up to 8 classes, optimal
    assignment beyond.
    """
    table = _contingency(truth, pred)
    k = max(table.shape)
    square = np.zeros((k, k), dtype=np.int64)
    square[: table.shape[0], : table.shape[1]] = table
    if k <= EXHAUSTIVE_LIMIT:
        matched = max(
            square[np.arange(k), perm].sum()
            for perm in itertools.permutations(range(k))
        )
    else:
        rows, cols = linear_sum_assignment(square, maximize=True)
        matched = square[rows, cols].sum()
    return float(1.0 - matched / table.sum())
