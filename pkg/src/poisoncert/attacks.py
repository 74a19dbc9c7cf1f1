"""Constructive poisoning attacks and an exhaustive optimal-attack oracle."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (AdversaryClass, CapacityExceeded, Dataset, DegenerateModel, Example,
                   InvalidInput, within_budget)
from .geometry import angle_to_halfspace
from .learners import Hypothesis, LearnerSpec, train

DEFAULT_ENUMERATION_CAP = 10**7
CIRCLE_TOL = 1e-6
TWO_PI = 2 * math.pi


def _assert_budget(S, out, cls, b):
    if not within_budget(S, out, cls, b):
        raise AssertionError(f"attack output exceeds its {cls.name} budget {b}")


# ---------------------------------------------------------------------------
# Interval label flips on the two-circle distribution


def circle_coordinates(X) -> tuple[np.ndarray, np.ndarray]:
    """(angle in [0, 2 pi), circle sign +1/-1) of points on the circles z = +1 and z = -1."""
    X = np.asarray(X, dtype=np.float64).reshape(-1, 3)
    return np.mod(np.arctan2(X[:, 1], X[:, 0]), TWO_PI), np.where(X[:, 2] >= 0, 1, -1)


def _on_circles(x) -> bool:
    x = np.asarray(x, dtype=np.float64)
    return (x.size == 3 and abs(x[0] ** 2 + x[1] ** 2 - 1.0) <= CIRCLE_TOL
            and abs(abs(x[2]) - 1.0) <= CIRCLE_TOL)


def arc_width(beta: float) -> float:
    """Angular width of an arc carrying measure beta/3 (each circle carries mass 1/2)."""
    return min(TWO_PI, 4 * math.pi * beta / 3)


def in_arc(angles, center: float, width: float) -> np.ndarray:
    """Membership in the half-open arc [center - width/2, center + width/2)."""
    offset = np.mod(np.asarray(angles) - (center - width / 2), TWO_PI)
    return offset < width


def flip_interval_attack(S: Dataset, target: Example, beta: float, randomized: bool = False,
                         seed: int = 0) -> Dataset:
    """Flip every label in an arc around the target and in its mirror arc on the other circle.

    The mirror arc holds the negations of the first arc's points, so the
    poisoned sample stays realizable by a homogeneous halfspace.
    """
    if not 0 < beta <= 1:
        raise InvalidInput("beta must be in (0, 1]")
    if S.d != 3 or not _on_circles(target.x):
        raise InvalidInput("target must lie on one of the circles z = +1 / z = -1 in d = 3")
    width = arc_width(beta)
    alpha, side = circle_coordinates(target.x)
    center = float(alpha[0])
    if randomized:
        rng = np.random.default_rng(seed)
        center = float(np.mod(center + rng.uniform(-width / 2, width / 2), TWO_PI))
    angles, sides = circle_coordinates(S.X)
    hit = np.where(sides == side[0], in_arc(angles, center, width),
                   in_arc(angles, np.mod(center + math.pi, TWO_PI), width))
    y = S.y.copy()
    y[hit] = 1 - y[hit]
    out = S.with_labels(y)
    _assert_budget(S, out, AdversaryClass.FLIP, int(hit.sum()))
    return out


# ---------------------------------------------------------------------------
# Rotation flips on the sphere


def rotation_plane(omega, x) -> np.ndarray:
    """Unit vector orthogonal to omega completing the rotation plane towards x."""
    omega = np.asarray(omega, dtype=np.float64)
    resid = x - np.dot(omega, x) * omega
    if np.linalg.norm(resid) <= 1e-12:
        e = np.zeros_like(omega)
        e[int(np.argmin(np.abs(omega)))] = 1.0
        resid = e - np.dot(omega, e) * omega
    return resid / np.linalg.norm(resid)


def rotated_normal(omega, x) -> np.ndarray:
    """The normal obtained by rotating omega by twice the target's angle to the boundary.

    The target ends up at the same angle on the other side of the new boundary.
    """
    omega = np.asarray(omega, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    theta = angle_to_halfspace(omega, x)
    u = rotation_plane(omega, x)
    s = 1.0 if np.dot(omega, x) >= 0 else -1.0
    w = math.cos(2 * theta) * omega - math.sin(2 * theta) * s * u
    return w / np.linalg.norm(w)


def rotation_flip_attack(S: Dataset, target: Example, omega_truth) -> Dataset:
    """Flip the labels of all points strictly between the true boundary and the rotated one."""
    omega = np.asarray(omega_truth, dtype=np.float64)
    if angle_to_halfspace(omega, target.x) == 0.0:
        return S
    w2 = rotated_normal(omega, target.x)
    between = (S.X @ omega) * (S.X @ w2) < 0
    y = S.y.copy()
    y[between] = 1 - y[between]
    out = S.with_labels(y)
    _assert_budget(S, out, AdversaryClass.FLIP, int(between.sum()))
    return out


# ---------------------------------------------------------------------------
# Greedy additions


def runner_up_label(h: Hypothesis, x, y: int) -> int:
    scores = np.array(h.label_scores(x), dtype=np.float64)
    if scores.size < 2:
        raise InvalidInput("hypothesis ranks a single label; no runner-up exists")
    scores[y] = -np.inf
    return int(np.argmax(scores))


def greedy_add_attack(S: Dataset, h: Hypothesis, target: Example, b: int) -> Dataset:
    """Append ``b`` copies of the target instance carrying the best wrong label under ``h``."""
    if b < 0:
        raise InvalidInput("budget must be >= 0")
    if b == 0:
        return S
    y2 = runner_up_label(h, target.x, target.y)
    extra = Dataset(np.repeat(target.x.reshape(1, -1), b, axis=0), np.full(b, y2),
                    n_labels=max(S.n_labels, y2 + 1))
    out = S.concat(extra)
    _assert_budget(S, out, AdversaryClass.ADD, b)
    return out


# ---------------------------------------------------------------------------
# Exhaustive oracle


@dataclass
class Transcript:
    cls: AdversaryClass
    budget: int
    changed_positions: list[int] = field(default_factory=list)
    new_values: list[tuple[list[float], int]] = field(default_factory=list)
    removed_positions: list[int] = field(default_factory=list)
    append: bool = False  # insertions go after the kept examples instead of before them

    def to_json(self) -> str:
        return json.dumps({"class": self.cls.value, "budget": self.budget,
                           "changed_positions": self.changed_positions,
                           "new_values": [[list(map(float, x)), int(y)] for x, y in self.new_values],
                           "removed_positions": self.removed_positions, "append": self.append})

    @classmethod
    def from_json(cls, text: str) -> "Transcript":
        d = json.loads(text)
        return cls(AdversaryClass.parse(d["class"]), d["budget"], d["changed_positions"],
                   [(x, y) for x, y in d["new_values"]], d.get("removed_positions", []),
                   bool(d.get("append", False)))

    def apply(self, S: Dataset) -> Dataset:
        """Replay on ``S``: in-place edits, or removals followed by insertions."""
        X, y = S.X.copy(), S.y.copy()
        n_labels = max([S.n_labels] + [v[1] + 1 for v in self.new_values])
        if self.cls in (AdversaryClass.REPLACE, AdversaryClass.FLIP):
            for pos, (xv, yv) in zip(self.changed_positions, self.new_values):
                X[pos], y[pos] = xv, yv
            return Dataset(X, y, n_labels=n_labels, d=S.d)
        keep = np.setdiff1d(np.arange(S.m), np.asarray(self.removed_positions, dtype=np.int64))
        X, y = X[keep], y[keep]
        if self.new_values:
            Xa = np.array([v[0] for v in self.new_values], dtype=np.float64).reshape(-1, S.d)
            ya = np.array([v[1] for v in self.new_values], dtype=np.int64)
            if self.append:
                X, y = np.vstack([X, Xa]), np.concatenate([y, ya])
            else:
                X, y = np.vstack([Xa, X]), np.concatenate([ya, y])
        return Dataset(X, y, n_labels=n_labels, d=S.d)


def _fitter(learner) -> Callable[[Dataset], object]:
    if isinstance(learner, LearnerSpec):
        return lambda D: train(learner, D)
    if callable(learner):
        return learner
    raise InvalidInput("learner must be a LearnerSpec or a callable training function")


def enumeration_size(m: int, cls: AdversaryClass, b: int, pool_size: int, n_labels: int) -> int:
    """Number of candidate datasets the oracle visits for budgets 0..b."""
    cls = AdversaryClass.parse(cls)
    total = 0
    for s in range(b + 1):
        if cls is AdversaryClass.FLIP:
            total += math.comb(m, s) * (n_labels - 1) ** s if s <= m else 0
        elif cls is AdversaryClass.REPLACE:
            total += math.comb(m, s) * pool_size ** s if s <= m else 0
        elif cls is AdversaryClass.ADD:
            total += math.comb(pool_size + s - 1, s) if pool_size else int(s == 0)
        elif cls is AdversaryClass.REMOVE:
            total += math.comb(m, s) if s <= m else 0
        else:
            # level s: removals r and additions a with max(r, a) == s
            for r in range(min(s, m) + 1):
                for a in range(s + 1):
                    if max(r, a) == s:
                        total += math.comb(m, r) * (math.comb(pool_size + a - 1, a) if pool_size
                                                    else int(a == 0))
    return total


def _candidates(S: Dataset, cls: AdversaryClass, b: int, pool: Sequence[Example]):
    """Yield (size, transcript) in size-then-lexicographic order."""
    m, P, L = S.m, len(pool), S.n_labels
    for s in range(b + 1):
        if cls is AdversaryClass.FLIP:
            for pos in itertools.combinations(range(m), s):
                options = [[l for l in range(L) if l != S.y[p]] for p in pos]
                for labels in itertools.product(*options):
                    yield s, Transcript(cls, s, list(pos),
                                        [(S.X[p].tolist(), l) for p, l in zip(pos, labels)])
        elif cls is AdversaryClass.REPLACE:
            for pos in itertools.combinations(range(m), s):
                for vals in itertools.product(range(P), repeat=s):
                    yield s, Transcript(cls, s, list(pos),
                                        [(pool[v].x.tolist(), pool[v].y) for v in vals])
        elif cls is AdversaryClass.ADD:
            for vals in itertools.combinations_with_replacement(range(P), s):
                yield s, Transcript(cls, s, list(range(s)),
                                    [(pool[v].x.tolist(), pool[v].y) for v in vals])
        elif cls is AdversaryClass.REMOVE:
            for pos in itertools.combinations(range(m), s):
                yield s, Transcript(cls, s, removed_positions=list(pos))
        else:
            for r in range(min(s, m) + 1):
                for a in range(s + 1):
                    if max(r, a) != s:
                        continue
                    for pos in itertools.combinations(range(m), r):
                        for vals in itertools.combinations_with_replacement(range(P), a):
                            yield s, Transcript(cls, s, list(range(a)),
                                                [(pool[v].x.tolist(), pool[v].y) for v in vals],
                                                list(pos))


def brute_force_search(S: Dataset, learner, target: Example, cls, b: int,
                       pool: Sequence[Example] = (), cap: int = DEFAULT_ENUMERATION_CAP,
                       reference: int | None = None):
    """First (Dataset, Transcript) within budget whose retrained prediction at the target
    differs from ``reference`` (default: the true label), or None.
    """
    cls = AdversaryClass.parse(cls)
    if b < 0:
        raise InvalidInput("budget must be >= 0")
    pool = list(pool)
    if cls in (AdversaryClass.REPLACE, AdversaryClass.ADD, AdversaryClass.ADD_REMOVE) and b > 0 \
            and not pool:
        raise InvalidInput(f"{cls.name} enumeration needs a non-empty candidate pool")
    n_labels = max([S.n_labels] + [e.y + 1 for e in pool])
    size = enumeration_size(S.m, cls, b, len(pool), n_labels)
    if size > cap:
        raise CapacityExceeded(f"{size} candidate datasets exceed the enumeration cap {cap}")
    fit = _fitter(learner)
    ref = target.y if reference is None else reference
    base = Dataset(S.X, S.y, n_labels=n_labels, d=S.d)
    for _, tr in _candidates(base, cls, b, pool):
        S2 = tr.apply(base)
        if S2.m == 0:
            continue
        try:
            model = fit(S2)
        except (InvalidInput, DegenerateModel):
            continue  # the learner rejects this dataset (e.g. fewer than K points left)
        if _predict(model, target.x) != ref:
            _assert_budget(S, S2, cls, tr.budget)
            return S2, tr
    return None


def _predict(model, x) -> int:
    return int(model.predict(x))


def brute_force_attack(S: Dataset, learner, target: Example, cls, b: int,
                       pool: Sequence[Example] = (), cap: int = DEFAULT_ENUMERATION_CAP,
                       reference: int | None = None) -> Dataset | None:
    found = brute_force_search(S, learner, target, cls, b, pool, cap, reference)
    return None if found is None else found[0]


def exact_robustness(S: Dataset, learner, target: Example, cls, b_max: int,
                     pool: Sequence[Example] = (), cap: int = DEFAULT_ENUMERATION_CAP,
                     reference: int | None = None) -> int | None:
    """Smallest budget at which the oracle succeeds; None means "greater than b_max".

    The value is exact relative to the pool: perturbations draw new values
    only from ``pool``.
    """
    found = brute_force_search(S, learner, target, cls, b_max, pool, cap, reference)
    return None if found is None else found[1].budget


__all__ = ["flip_interval_attack", "rotation_flip_attack", "rotated_normal", "greedy_add_attack",
           "runner_up_label", "brute_force_attack", "brute_force_search", "exact_robustness",
           "enumeration_size", "Transcript", "circle_coordinates", "arc_width", "in_arc"]
