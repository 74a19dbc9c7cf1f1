"""Exact K-NN robustness under replacement, addition and removal attacks.

All three quantities are computed from the labels of the training set listed
in neighbor order around the query: an adversary's best move is always to
act on the front of that list (placing points at the query itself, or
deleting the nearest points of the true label).  Ties follow the learner's
rules: earlier positions win distance ties, smaller labels win vote ties.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .core import INFINITY, Dataset, Example, InvalidInput
from .learners import neighbor_order


def _sorted_labels(S: Dataset, K: int, e: Example) -> np.ndarray:
    if K < 1:
        raise InvalidInput("K must be >= 1")
    if S.m < K:
        raise InvalidInput(f"need m >= K (m={S.m}, K={K})")
    if S.d != e.x.size:
        raise InvalidInput(f"dimension mismatch: data d={S.d}, query d={e.x.size}")
    return S.y[neighbor_order(S.X, e.x)]


def _window_counts(labels, K, n_labels):
    return np.bincount(labels[:K], minlength=n_labels)


def _n_labels(S: Dataset, e: Example) -> int:
    return max(S.n_labels, e.y + 1)


def knn_margin(S: Dataset, K: int, e: Example) -> int:
    """Vote lead of the true label among the K neighbors; 0 if the prediction is wrong."""
    L = _n_labels(S, e)
    counts = _window_counts(_sorted_labels(S, K, e), K, L)
    if int(np.argmax(counts)) != e.y:
        return 0
    others = np.delete(counts, e.y)
    return int(counts[e.y] - (others.max() if others.size else 0))


def knn_rob_replace(S: Dataset, K: int, e: Example) -> int:
    """Minimum replacements that change the K-NN prediction at ``e.x``.

    Each replacement turns one true-label neighbor into a challenger ``j``
    sitting at the query, closing the vote gap by two.  A challenger with a
    larger label id must strictly overtake, so an even gap costs one extra
    replacement against it.
    """
    L = _n_labels(S, e)
    counts = _window_counts(_sorted_labels(S, K, e), K, L)
    if int(np.argmax(counts)) != e.y:
        return 0
    best = None
    for j in range(L):
        if j == e.y:
            continue
        gap = int(counts[e.y] - counts[j])
        cost = gap // 2 + 1 if (gap % 2 == 0 and j > e.y) else -(-gap // 2)
        best = cost if best is None else min(best, cost)
    return best if best is not None else 0


def knn_rob_replace_margin_rule(S: Dataset, K: int, e: Example) -> int:
    """The margin formula ``ceil(margin / 2)``; equals ``knn_rob_replace`` for binary labels and odd K."""
    return -(-knn_margin(S, K, e) // 2)


def knn_rob_add(S: Dataset, K: int, e: Example) -> int:
    """Minimum additions that change the prediction (points at the query, admitted first)."""
    labels = _sorted_labels(S, K, e)
    return int(_kernels.knn_add_scan(labels, K, e.y, _n_labels(S, e)))


def knn_rob_remove(S: Dataset, K: int, e: Example):
    """Minimum removals that change the prediction, or ``INFINITY`` if none can."""
    labels = _sorted_labels(S, K, e)
    r = int(_kernels.knn_remove_scan(labels, K, e.y, _n_labels(S, e)))
    return INFINITY if r < 0 else r


def knn_rob_add_greedy(S: Dataset, K: int, e: Example) -> int:
    """Greedy additions: keep adding the currently strongest wrong label at the query.

    Kept for comparison; it can overshoot the exact value with three or more
    labels, because the strongest wrong label is not always the cheapest to
    promote once the window slides.
    """
    labels = _sorted_labels(S, K, e)
    L = _n_labels(S, e)
    added = np.zeros(L, dtype=np.int64)
    for a in range(0, K + 1):
        counts = _window_counts(labels, K - a, L) + added
        if int(np.argmax(counts)) != e.y:
            return a
        wrong = counts.copy()
        wrong[e.y] = -1
        added[int(np.argmax(wrong))] += 1
    return K


__all__ = ["knn_margin", "knn_rob_replace", "knn_rob_replace_margin_rule", "knn_rob_add",
           "knn_rob_remove", "knn_rob_add_greedy"]
