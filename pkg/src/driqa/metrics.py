"""Rank-correlation and judgment-accuracy metrics.

SRCC is computed as the Pearson correlation of average ranks (ties receive
the mean of their rank positions) rather than the 6*sum(d^2) shortcut,
which is invalid under ties.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np


def _as_finite_1d(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _check_pair(predicted, target) -> tuple[np.ndarray, np.ndarray]:
    p = _as_finite_1d(predicted, "predicted")
    t = _as_finite_1d(target, "target")
    if p.size != t.size:
        raise ValueError(f"length mismatch: {p.size} vs {t.size}")
    if p.size < 2:
        raise ValueError("need at least 2 score pairs")
    return p, t


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values all receive the mean of their positions."""
    a = _as_finite_1d(values, "values")
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size, dtype=np.float64)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def plcc(predicted, target) -> float:
    """Pearson product-moment correlation, in [-1, 1].

    Raises ValueError if either list has zero variance.
    """
    p, t = _check_pair(predicted, target)
    dp = p - p.mean()
    dt = t - t.mean()
    denom = np.sqrt(np.sum(dp * dp) * np.sum(dt * dt))
    if denom == 0.0:
        raise ValueError("correlation undefined: an input list is constant")
    return float(np.sum(dp * dt) / denom)


def srcc(predicted, target) -> float:
    """Spearman rank-order correlation with average-rank tie handling."""
    p, t = _check_pair(predicted, target)
    return plcc(average_ranks(p), average_ranks(t))


def pairwise_accuracy(
    predicted,
    target,
    pair_index: Sequence[tuple[int, int]],
) -> float:
    """Fraction of pairs whose predicted ordering matches the target ordering.

    Pairs with tied targets are excluded from the denominator; tied
    predictions count as wrong.
    """
    p = _as_finite_1d(predicted, "predicted")
    t = _as_finite_1d(target, "target")
    if p.size != t.size:
        raise ValueError(f"length mismatch: {p.size} vs {t.size}")
    correct = 0
    total = 0
    for i, j in pair_index:
        if not (0 <= i < p.size and 0 <= j < p.size):
            raise ValueError(f"pair index ({i}, {j}) out of range for n={p.size}")
        if t[i] == t[j]:
            continue
        total += 1
        if np.sign(p[i] - p[j]) == np.sign(t[i] - t[j]):
            correct += 1
    if total == 0:
        raise ValueError("no pairs with distinct target scores")
    return correct / total
