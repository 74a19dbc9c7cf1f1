"""Robust learners: a random-subsample learner and partition-aggregation ensembles.

The ensembles split the training sequence into disjoint partitions, train
one sub-model per partition and take a plurality vote.  A poisoned example
can only influence the few partitions it lands in, so the vote gap bounds
how many examples an adversary must corrupt to change the prediction.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (ABSTAIN, AdversaryClass, BudgetRule, CertifiedPrediction, Dataset,
                   DegenerateModel, InvalidInput, ceil_int, derive_seed, example_key)
from .learners import Hypothesis, LearnerSpec, hypothesis_from_dict, train
from .parallel import ordered_map


class Scheme(enum.Enum):
    SEQUENTIAL = "sequential"
    HASHED = "hashed"


# Partitions one budget unit can disturb, by scheme and adversary class.
# None marks combinations the sequential scheme cannot certify: inserting or
# deleting shifts every later position into a different block.
PER_EXAMPLE_FACTOR = {
    Scheme.HASHED: {AdversaryClass.REPLACE: 2, AdversaryClass.FLIP: 2, AdversaryClass.ADD: 1,
                    AdversaryClass.REMOVE: 1, AdversaryClass.ADD_REMOVE: 2},
    Scheme.SEQUENTIAL: {AdversaryClass.REPLACE: 1, AdversaryClass.FLIP: 1, AdversaryClass.ADD: None,
                        AdversaryClass.REMOVE: None, AdversaryClass.ADD_REMOVE: None},
}


# ---------------------------------------------------------------------------
# Subsample learner


def wr_subsample_size(m: int, rule: BudgetRule) -> int:
    b = rule(m)
    if b < 1:
        raise InvalidInput(f"subsample learner needs b(m) >= 1, got b({m}) = {b}")
    k = ceil_int(math.sqrt(m / b))
    if k > m:
        raise InvalidInput(f"subsample size {k} exceeds m = {m}")
    return k


def wr_indices(m: int, rule: BudgetRule, seed: int) -> np.ndarray:
    """Sorted positions of a uniform size-k subsample without replacement."""
    k = wr_subsample_size(m, rule)
    rng = np.random.default_rng(derive_seed(seed, "wr-subsample"))
    return np.sort(rng.choice(m, size=k, replace=False))


class SubsampleModel(Hypothesis):
    def __init__(self, sub: Hypothesis, indices: np.ndarray):
        self.sub = sub
        self.indices = np.asarray(indices, dtype=np.int64)
        self.n_labels = sub.n_labels

    def predict_batch(self, X):
        return self.sub.predict_batch(X)

    def label_scores(self, x):
        return self.sub.label_scores(x)

    def to_dict(self):
        return {"type": "subsample", "indices": self.indices.tolist(), "sub": self.sub.to_dict()}


def wr_train(base: LearnerSpec, S: Dataset, rule: BudgetRule, seed: int) -> SubsampleModel:
    idx = wr_indices(S.m, rule, seed)
    return SubsampleModel(train(base, S.subset(idx)), idx)


# ---------------------------------------------------------------------------
# Partitioning


def sequential_blocks(m: int, t: int) -> list[np.ndarray]:
    if t < 1 or t > m:
        raise InvalidInput(f"need 1 <= t <= m, got t={t}, m={m}")
    size = m // t
    return [np.arange(i * size, (i + 1) * size) for i in range(t)]


def partition_sequential(S: Dataset, t: int) -> list[Dataset]:
    return [S.subset(idx) for idx in sequential_blocks(S.m, t)]


def _hash_bytes(x: np.ndarray, y: int, occurrence: int) -> bytes:
    xb, yk = example_key(x, y)
    return xb + np.int64(yk).astype("<i8").tobytes() + np.int64(occurrence).astype("<i8").tobytes()


def hash_bucket(x, y: int, occurrence: int, key: bytes, t: int) -> int:
    """Keyed hash of (x, y, occurrence index) reduced mod ``t``."""
    h = hashlib.blake2b(_hash_bytes(np.asarray(x), y, occurrence), key=key, digest_size=8)
    return int.from_bytes(h.digest(), "little") % t


def hashed_assignment(S: Dataset, t: int, key: bytes) -> np.ndarray:
    if t < 1:
        raise InvalidInput("t must be >= 1")
    occ = S.occurrence_indices()
    return np.array([hash_bucket(S.X[i], int(S.y[i]), int(occ[i]), key, t) for i in range(S.m)],
                    dtype=np.int64)


def hashed_blocks(S: Dataset, t: int, key: bytes) -> list[np.ndarray]:
    assign = hashed_assignment(S, t, key)
    return [np.flatnonzero(assign == i) for i in range(t)]


def partition_hashed(S: Dataset, t: int, key: bytes) -> list[Dataset]:
    return [S.subset(idx) for idx in hashed_blocks(S, t, key)]


def key_from_seed(seed: int) -> bytes:
    return hashlib.blake2b(f"{int(seed)}:hash-key".encode(), digest_size=16).digest()


# ---------------------------------------------------------------------------
# Ensembles


@dataclass
class EnsembleModel:
    base: LearnerSpec
    scheme: Scheme
    t: int
    threshold: int
    key: bytes | None
    partitions: list[np.ndarray]
    trained: list[int]
    subs: list[Hypothesis]
    n_labels: int
    per_example_factor: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.per_example_factor:
            self.per_example_factor = dict(PER_EXAMPLE_FACTOR[self.scheme])

    @property
    def t_prime(self) -> int:
        return len(self.subs)

    def retrain(self, S: Dataset) -> "EnsembleModel":
        """Retrain on a (possibly poisoned) dataset with this model's t, threshold and key."""
        return _fit(self.base, S, self.scheme, self.t, self.threshold, self.key)

    def predict(self, x) -> int:
        return ensemble_predict(self, x)

    def votes(self, x) -> np.ndarray:
        counts = np.zeros(self.n_labels, dtype=np.int64)
        for h in self.subs:
            counts[h.predict(x)] += 1
        return counts

    def votes_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        counts = np.zeros((X.shape[0], self.n_labels), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for h in self.subs:
            counts[rows, h.predict_batch(X)] += 1
        return counts

    def to_json(self) -> str:
        return json.dumps({
            "type": "ensemble", "scheme": self.scheme.value, "t": self.t,
            "t_prime": self.t_prime, "threshold": self.threshold,
            "key": self.key.hex() if self.key is not None else None,
            "base": self.base.to_dict(), "n_labels": self.n_labels,
            "partitions": [p.tolist() for p in self.partitions], "trained": self.trained,
            "subs": [h.to_dict() for h in self.subs]})

    @classmethod
    def from_json(cls, text: str) -> "EnsembleModel":
        d = json.loads(text)
        return cls(LearnerSpec.from_dict(d["base"]), Scheme(d["scheme"]), d["t"], d["threshold"],
                   bytes.fromhex(d["key"]) if d["key"] else None,
                   [np.array(p, dtype=np.int64) for p in d["partitions"]], d["trained"],
                   [hypothesis_from_dict(h) for h in d["subs"]], d["n_labels"])


def sequential_t(m: int, b: int) -> int:
    return ceil_int(math.sqrt(b * m))


def hashed_t(m: int, b: int) -> int:
    return ceil_int(4 * math.sqrt(b * m))


def hashed_threshold(m: int, t: int) -> int:
    return max(1, ceil_int(m / (6 * t)))


def rlrn_train(base: LearnerSpec, S: Dataset, rule: BudgetRule, scheme, key: bytes | None = None,
               t: int | None = None) -> EnsembleModel:
    """Train a partition-aggregation ensemble sized from the budget rule.

    ``t`` overrides the partition count the rule would give.
    """
    scheme = Scheme(scheme) if not isinstance(scheme, Scheme) else scheme
    if t is None:
        b = rule(S.m)
        if b < 1:
            raise InvalidInput(f"ensemble needs b(m) >= 1, got {b}")
        t = sequential_t(S.m, b) if scheme is Scheme.SEQUENTIAL else hashed_t(S.m, b)
    if scheme is Scheme.SEQUENTIAL:
        if t > S.m:
            raise InvalidInput(f"sequential scheme needs t <= m (t={t}, m={S.m})")
        return _fit(base, S, scheme, t, 1, None)
    if key is None:
        key = key_from_seed(base.seed)
    return _fit(base, S, scheme, t, hashed_threshold(S.m, t), key)


def _fit(base, S, scheme, t, threshold, key) -> EnsembleModel:
    if scheme is Scheme.SEQUENTIAL:
        blocks = sequential_blocks(S.m, t)
    else:
        blocks = hashed_blocks(S, t, key)
    trained = [i for i, blk in enumerate(blocks) if blk.size >= threshold and blk.size > 0]
    if not trained:
        raise DegenerateModel("no partition is large enough to train a sub-model")
    subs = ordered_map(lambda i: train(base, S.subset(blocks[i])), trained)
    return EnsembleModel(base, scheme, t, threshold, key, blocks, trained, subs, S.n_labels)


def _decide(counts: np.ndarray) -> tuple[int, int]:
    """(prediction, gap) from vote counts; ABSTAIN with gap 0 on a tie for first."""
    order = np.argsort(-counts, kind="stable")
    top = int(counts[order[0]])
    second = int(counts[order[1]]) if counts.size > 1 else 0
    if top == second:
        return ABSTAIN, 0
    return int(order[0]), top - second


def ensemble_predict(E: EnsembleModel, x) -> int:
    return _decide(E.votes(x))[0]


def certificate_from_gap(gap: int, factor: int | None) -> int:
    if factor is None:
        return 0
    return ceil_int(ceil_int(gap / 2) / factor)


def ensemble_certify(E: EnsembleModel, x, cls) -> CertifiedPrediction:
    cls = AdversaryClass.parse(cls)
    pred, gap = _decide(E.votes(x))
    return _certified(E, pred, gap, cls)


def _certified(E, pred, gap, cls) -> CertifiedPrediction:
    if pred == ABSTAIN:
        return CertifiedPrediction(ABSTAIN, 0)
    factor = E.per_example_factor.get(cls)
    if factor is None:
        warnings.warn(f"{E.scheme.value} ensembles cannot certify {cls.name} attacks; cert = 0",
                      stacklevel=3)
    return CertifiedPrediction(pred, certificate_from_gap(gap, factor))


def ensemble_certify_batch(E: EnsembleModel, X, cls) -> list[CertifiedPrediction]:
    cls = AdversaryClass.parse(cls)
    out = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for counts in E.votes_batch(X):
            pred, gap = _decide(counts)
            out.append(_certified(E, pred, gap, cls))
    if caught:
        warnings.warn(str(caught[0].message), stacklevel=2)
    return out


__all__ = ["Scheme", "PER_EXAMPLE_FACTOR", "wr_subsample_size", "wr_indices", "wr_train",
           "SubsampleModel", "partition_sequential", "partition_hashed", "hash_bucket",
           "hashed_assignment", "key_from_seed", "EnsembleModel", "rlrn_train", "ensemble_predict",
           "ensemble_certify", "ensemble_certify_batch", "certificate_from_gap"]
