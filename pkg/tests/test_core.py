import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from poisoncert.core import (ABSTAIN, AdversaryClass, BudgetRule, CapacityExceeded,
                             CertifiedPrediction, Dataset, Example, InvalidInput, derive_seed,
                             lambda_table, rng_for, sample_lambda, within_budget, zero_one_loss)

A, B, C = [0.0, 1.0], [1.0, 0.0], [2.0, 2.0]


def ds(rows, n_labels=None):
    return Dataset([r[0] for r in rows], [r[1] for r in rows], n_labels=n_labels)


# --- oracles ---------------------------------------------------------------

def min_hamming_over_orders(S, S2):
    """Smallest position-wise disagreement count over all reorderings of S2."""
    a = [(tuple(x), int(y)) for x, y in zip(S.X, S.y)]
    b = [(tuple(x), int(y)) for x, y in zip(S2.X, S2.y)]
    return min(sum(u != v for u, v in zip(a, perm)) for perm in itertools.permutations(b))


def min_label_flips_over_orders(S, S2):
    """Smallest label disagreement over reorderings of S2 that align instances, or None."""
    best = None
    for perm in itertools.permutations(range(S2.m)):
        if all(np.array_equal(S.X[i], S2.X[j]) for i, j in enumerate(perm)):
            flips = sum(int(S.y[i] != S2.y[j]) for i, j in enumerate(perm))
            best = flips if best is None else min(best, flips)
    return best


# --- loss, types -----------------------------------------------------------

def test_zero_one_loss():
    assert zero_one_loss(3, 3) == 0
    assert zero_one_loss(2, 3) == 1
    assert zero_one_loss(ABSTAIN, 3) == 1


def test_abstain_certificate_must_be_zero():
    with pytest.raises(InvalidInput):
        CertifiedPrediction(ABSTAIN, 2)
    assert CertifiedPrediction(ABSTAIN, 0).cert == 0


def test_dataset_validation():
    with pytest.raises(InvalidInput):
        Dataset([[1.0], [np.nan]], [0, 1])
    with pytest.raises(InvalidInput):
        Dataset([[1.0], [2.0]], [0])
    with pytest.raises(InvalidInput):
        Dataset([[1.0]], [3], n_labels=2)
    S = Dataset([[1.0, 2.0]], [1])
    with pytest.raises(AttributeError):
        S.X = None
    with pytest.raises(ValueError):
        S.X[0, 0] = 5.0


def test_occurrence_indices():
    S = ds([(A, 0), (B, 1), (A, 0), (A, 1), (A, 0)])
    assert S.occurrence_indices().tolist() == [0, 0, 1, 0, 2]


def test_negative_zero_is_the_same_value():
    assert Example(np.array([-0.0]), 0).key() == Example(np.array([0.0]), 0).key()


def test_adversary_class_parse():
    assert AdversaryClass.parse("rep") is AdversaryClass.REPLACE
    assert AdversaryClass.parse("AddRemove") is AdversaryClass.ADD_REMOVE
    with pytest.raises(InvalidInput):
        AdversaryClass.parse("swap")


# --- within_budget -----------------------------------------------------------

def test_flip_with_reorder():
    S = ds([(A, 0), (B, 1)])
    S2 = ds([(B, 1), (A, 1)])
    assert within_budget(S, S2, "flip", 1)
    assert not within_budget(S, S2, "flip", 0)


def test_replace_preserves_size():
    assert not within_budget(ds([(A, 0)]), ds([(A, 0), (C, 1)]), "rep", 1)


def test_dimension_mismatch():
    with pytest.raises(InvalidInput):
        within_budget(Dataset([[1.0]], [0]), Dataset([[1.0, 2.0]], [0]), "rep", 1)


def test_add_remove_membership():
    S = ds([(A, 0), (B, 1)])
    assert within_budget(S, ds([(A, 0), (B, 1), (C, 0)]), "add", 1)
    assert not within_budget(S, ds([(A, 1), (B, 1), (C, 0)]), "add", 5)
    assert within_budget(S, ds([(B, 1)]), "rem", 1)
    assert not within_budget(S, ds([(C, 1)]), "rem", 1)
    assert within_budget(S, ds([(B, 1), (C, 0), (C, 1)]), "addrem", 2)
    assert not within_budget(S, ds([(B, 1), (C, 0), (C, 1)]), "addrem", 1)


def test_replace_two_and_shuffle_against_permutation_oracle(rng):
    for _ in range(30):
        X = rng.integers(0, 3, size=(6, 2)).astype(float)
        y = rng.integers(0, 2, size=6)
        S = Dataset(X, y)
        X2, y2 = X.copy(), y.copy()
        pos = rng.choice(6, size=2, replace=False)
        X2[pos] = rng.integers(5, 8, size=(2, 2))  # values absent from S
        y2[pos] = rng.integers(0, 2, size=2)
        order = rng.permutation(6)
        S2 = Dataset(X2[order], y2[order])
        assert min_hamming_over_orders(S, S2) == 2
        assert within_budget(S, S2, "rep", 2)
        assert not within_budget(S, S2, "rep", 1)


small_rows = st.lists(st.tuples(st.integers(0, 2), st.integers(0, 1)), min_size=1, max_size=5)


@given(small_rows, small_rows)
def test_replace_matches_permutation_oracle(r1, r2):
    S = Dataset([[float(v)] for v, _ in r1], [lab for _, lab in r1], n_labels=2)
    S2 = Dataset([[float(v)] for v, _ in r2], [lab for _, lab in r2], n_labels=2)
    if S.m != S2.m:
        assert not within_budget(S, S2, "rep", 10)
        return
    dist = min_hamming_over_orders(S, S2)
    for b in range(S.m + 1):
        assert within_budget(S, S2, "rep", b) == (dist <= b)


@given(small_rows, st.lists(st.integers(0, 1), min_size=5, max_size=5), st.randoms())
def test_flip_matches_matching_oracle(rows, new_labels, rnd):
    S = Dataset([[float(v)] for v, _ in rows], [lab for _, lab in rows], n_labels=2)
    y2 = list(new_labels[:S.m])
    order = list(range(S.m))
    rnd.shuffle(order)
    S2 = Dataset(S.X[order], np.array(y2)[order], n_labels=2)
    dist = min_label_flips_over_orders(S, S2)
    for b in range(S.m + 1):
        assert within_budget(S, S2, "flip", b) == (dist <= b)
        if within_budget(S, S2, "flip", b):
            assert within_budget(S, S2, "rep", b)  # flips are replacements


@given(small_rows, st.sampled_from(list(AdversaryClass)), st.integers(0, 4))
def test_identity_and_monotonicity(rows, cls, b):
    S = Dataset([[float(v)] for v, _ in rows], [lab for _, lab in rows], n_labels=2)
    assert within_budget(S, S, cls, 0)
    S2 = Dataset(S.X[::-1], S.y[::-1], n_labels=2).concat(Dataset([[9.0]], [1]))
    if within_budget(S, S2, cls, b):
        assert within_budget(S, S2, cls, b + 1)


# --- budget rules ------------------------------------------------------------

def test_budget_rule_forms():
    assert BudgetRule.parse("const:3")(10) == 3
    assert BudgetRule.parse("const:30")(10) == 10  # clamped to m
    assert BudgetRule.parse("linear:0.25")(10) == 3
    assert BudgetRule.parse("sqrt")(100) == 10
    assert BudgetRule.parse("sqrt")(101) == 11
    assert BudgetRule.parse("power:2,0.5")(100) == 20
    # c = 1/502, d = 10, m = 20000: 20000 / (502 * sqrt(10)) = 12.6 -> 13
    assert BudgetRule.parse(f"sphere:{1/502!r},10")(20000) == 13
    assert BudgetRule.sphere(20.0, 3)(2000) == 2000  # clamped
    with pytest.raises(InvalidInput):
        BudgetRule.parse("cubic:1")


def test_budget_rounding_is_not_fooled_by_float_error():
    # 0.1 * 30 = 3.0000000000000004 in floating point; the budget is 3, not 4
    assert BudgetRule.linear(0.1)(30) == 3


@given(st.sampled_from(["const:2", "linear:0.3", "sqrt", "power:1.5,0.25", "sphere:0.5,7"]),
       st.integers(1, 5000))
def test_budget_array_matches_scalar(text, m):
    rule = BudgetRule.parse(text)
    assert rule.evaluate_array(np.array([m]))[0] == rule(m)
    assert 0 <= rule(m) <= m
    assert BudgetRule.parse(rule.describe()) == rule


# --- lambda ------------------------------------------------------------------

def lambda_oracle(rule, x, cap):
    """Smallest m with m'/b(m') >= x for all m' in [m, cap], by direct scan."""
    ok_from = cap + 1
    for m in range(cap, 0, -1):
        b = rule(m)
        if b > 0 and m / b < x:
            break
        ok_from = m
    return ok_from


def test_lambda_examples():
    assert sample_lambda(BudgetRule.power(1.0, 0.5), 2.0, search_cap=10_000) == 6
    assert 5 / BudgetRule.power(1.0, 0.5)(5) < 2
    assert sample_lambda(BudgetRule.constant(1), 7.0, search_cap=10_000) == 7


def test_lambda_rejects_linear_and_unsettled():
    with pytest.raises(InvalidInput):
        sample_lambda(BudgetRule.linear(0.1), 2.0)
    with pytest.raises(CapacityExceeded):
        sample_lambda(BudgetRule.power(1.0, 0.5), 1000.0, search_cap=1000)


def test_lambda_tail_check_rejects_sphere_budgets():
    # c*m/sqrt(d) grows linearly in m: the ratio m/b(m) never keeps rising at the cap
    with pytest.raises(CapacityExceeded):
        sample_lambda(BudgetRule.sphere(0.3, 4), 1.0, search_cap=5000)


@given(st.floats(1.0, 40.0), st.sampled_from(["sqrt", "const:3", "power:2,0.5", "power:1,0.3"]))
def test_lambda_matches_scan_oracle(x, text):
    rule = BudgetRule.parse(text)
    cap = 5000
    if cap / rule(cap) < x:
        with pytest.raises(CapacityExceeded):
            sample_lambda(rule, x, search_cap=cap)
        return
    lam = sample_lambda(rule, x, search_cap=cap)
    assert lam == lambda_oracle(rule, x, cap)
    assert lambda_table(rule, [x], search_cap=cap)[0] == lam
    for m in range(lam, min(cap, lam + 200) + 1):
        assert m / max(rule(m), 1) >= x or rule(m) == 0


def test_lambda_is_nondecreasing():
    xs = np.linspace(1, 50, 500)
    lam = lambda_table(BudgetRule.power(1.0, 0.5), xs, search_cap=20_000)
    assert np.all(np.diff(lam) >= 0)
    assert np.all(lam / xs**2 <= 4)


# --- seeds -------------------------------------------------------------------

def test_named_seeds():
    assert derive_seed(1, "a") == derive_seed(1, "a")
    assert derive_seed(1, "a") != derive_seed(1, "b")
    assert derive_seed(1, "a") != derive_seed(2, "a")
    assert rng_for(3, "x").random() == rng_for(3, "x").random()
    assert 0 <= derive_seed(0, "t") < 2**64
