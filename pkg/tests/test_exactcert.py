import itertools
import math

import numpy as np
import pytest

from poisoncert.core import INFINITY, Dataset, Example, InvalidInput
from poisoncert.exactcert import (knn_margin, knn_rob_add, knn_rob_add_greedy, knn_rob_remove,
                                  knn_rob_replace, knn_rob_replace_margin_rule)

# --- independent K-NN and exhaustive attack oracles ----------------------------


def knn(X, y, K, q, n_labels):
    d = np.sum((np.asarray(X, float) - q) ** 2, axis=1)
    order = sorted(range(len(X)), key=lambda i: (d[i], i))[:K]
    votes = np.bincount(np.asarray(y)[order], minlength=n_labels)
    return int(np.argmax(votes))


def oracle_replace(S, K, e, pool, b_max=6):
    L = max(S.n_labels, e.y + 1, max(p[1] for p in pool) + 1)
    if knn(S.X, S.y, K, e.x, L) != e.y:
        return 0
    for b in range(1, b_max + 1):
        for pos in itertools.combinations(range(S.m), b):
            for vals in itertools.product(pool, repeat=b):
                X, y = S.X.copy(), S.y.copy()
                for p, (xv, yv) in zip(pos, vals):
                    X[p], y[p] = xv, yv
                if knn(X, y, K, e.x, L) != e.y:
                    return b
    return None


def oracle_add(S, K, e, b_max=4):
    L = max(S.n_labels, e.y + 1)
    if knn(S.X, S.y, K, e.x, L) != e.y:
        return 0
    for b in range(1, b_max + 1):
        for labels in itertools.combinations_with_replacement(range(L), b):
            X = np.vstack([np.repeat(e.x[None], b, axis=0), S.X])  # admitted first on ties
            y = np.concatenate([labels, S.y])
            if knn(X, y, K, e.x, L) != e.y:
                return b
    return None


def oracle_remove(S, K, e, b_max):
    L = max(S.n_labels, e.y + 1)
    if knn(S.X, S.y, K, e.x, L) != e.y:
        return 0
    for b in range(1, b_max + 1):
        for pos in itertools.combinations(range(S.m), b):
            keep = [i for i in range(S.m) if i not in pos]
            if len(keep) >= K and knn(S.X[keep], S.y[keep], K, e.x, L) != e.y:
                return b
    return None


def instance(rng, m_max=10, labels=(2, 3)):
    K = int(rng.choice([1, 3, 5]))
    L = int(rng.choice(labels))
    m = int(rng.integers(K, m_max + 1))
    X = rng.integers(-2, 3, size=(m, 2)).astype(float)
    y = np.where(rng.random(m) < 0.7, (X[:, 0] > 0).astype(int) % L, rng.integers(0, L, size=m))
    S = Dataset(X, y, n_labels=L)
    q = rng.integers(-2, 3, size=2).astype(float)
    lab = knn(X, y, K, q, L) if rng.random() < 0.85 else int(rng.integers(0, L))
    return S, K, Example(q, lab)


def neighbors_with(labels):
    X = np.arange(len(labels), dtype=float).reshape(-1, 1)
    return Dataset(X, labels, n_labels=max(labels) + 1), Example(np.array([0.0]), 0)


# --- examples ------------------------------------------------------------------

def test_margin_examples():
    S, e = neighbors_with([0, 0, 0, 1, 1])
    assert knn_margin(S, 5, e) == 1
    S, e = neighbors_with([0, 0, 0, 0, 0])
    assert knn_margin(S, 5, e) == 5
    S, e = neighbors_with([1, 1, 0])
    assert knn_margin(S, 3, e) == 0
    with pytest.raises(InvalidInput):
        knn_margin(S, 4, e)


def test_replace_examples():
    S, e = neighbors_with([0, 0, 0, 0, 0, 1])
    assert knn_margin(S, 5, e) == 5 and knn_rob_replace(S, 5, e) == 3
    assert knn_rob_replace_margin_rule(S, 5, e) == 3
    S, e = neighbors_with([1, 1, 0])
    assert knn_rob_replace(S, 3, e) == 0


def test_replace_tie_rule_makes_even_margins_asymmetric():
    # vote ties go to the smaller label: against y = 0 a challenger must win
    # outright, while against y = 1 a tie with label 0 already flips.
    S = Dataset(np.arange(4.0).reshape(-1, 1), [0, 0, 0, 1])
    assert knn_rob_replace(S, 4, Example(np.array([0.0]), 0)) == 2  # 3-1 -> needs 1-3
    S = Dataset(np.arange(4.0).reshape(-1, 1), [1, 1, 1, 0])
    assert knn_rob_replace(S, 4, Example(np.array([0.0]), 1)) == 1  # 3-1 -> 2-2 tie goes to 0


def test_add_and_remove_examples():
    S, e = neighbors_with([0, 0, 0, 1, 1])
    assert knn_rob_add(Dataset(S.X[:1], S.y[:1], n_labels=2), 1, e) == 1
    S, e = neighbors_with([0, 0, 0, 0])
    assert knn_rob_remove(S, 3, e) == INFINITY
    S, e = neighbors_with([1, 0, 0])
    assert knn_rob_add(S, 1, e) == 0 and knn_rob_remove(S, 1, e) == 0


# --- oracle agreement -------------------------------------------------------------

def test_replace_matches_oracle(rng):
    for _ in range(150):
        S, K, e = instance(rng, m_max=8)
        pool = [(e.x, lab) for lab in range(S.n_labels)]
        value = knn_rob_replace(S, K, e)
        assert value == oracle_replace(S, K, e, pool)


def test_richer_pool_cannot_beat_exact_value(rng):
    for _ in range(40):
        S, K, e = instance(rng, m_max=7)
        pool = [(e.x, lab) for lab in range(S.n_labels)] + [([2.0, 2.0], 1), ([0.0, 1.0], 0)]
        value = knn_rob_replace(S, K, e)
        assert oracle_replace(S, K, e, pool, b_max=value) == value


def test_add_matches_oracle(rng):
    for _ in range(150):
        S, K, e = instance(rng, m_max=10)
        value = knn_rob_add(S, K, e)
        expect = oracle_add(S, K, e, b_max=min(K, 5))
        assert value == expect


def test_remove_matches_oracle(rng):
    for _ in range(150):
        S, K, e = instance(rng, m_max=8)
        value = knn_rob_remove(S, K, e)
        expect = oracle_remove(S, K, e, b_max=S.m - K)
        assert value == (INFINITY if expect is None else expect)


def test_replace_is_the_strongest_attack(rng):
    for _ in range(200):
        S, K, e = instance(rng, m_max=12)
        rep = knn_rob_replace(S, K, e)
        assert rep <= knn_rob_add(S, K, e)
        assert rep <= knn_rob_remove(S, K, e)
        # the tie rule can cost one replacement more than half the margin
        assert rep - knn_rob_replace_margin_rule(S, K, e) in (0, 1)


def test_greedy_add_never_undercuts_exact(rng):
    for _ in range(300):
        S, K, e = instance(rng, m_max=12, labels=(3, 4))
        assert knn_rob_add_greedy(S, K, e) >= knn_rob_add(S, K, e)


def test_greedy_add_can_overshoot():
    # K = 5, y = 0, neighbor labels by distance 0 0 2 1 1.  Greedy keeps adding
    # the strongest wrong label 1, which only ties label 0 (and loses the tie)
    # until the third copy; two copies of label 2 push out both label-1 points
    # and win 3-2.
    S = Dataset(np.arange(1.0, 6.0).reshape(-1, 1), [0, 0, 2, 1, 1], n_labels=3)
    e = Example(np.array([0.0]), 0)
    assert knn_rob_add(S, 5, e) == oracle_add(S, 5, e) == 2
    assert knn_rob_add_greedy(S, 5, e) == 3
