"""Domain types, adversary classes, budget rules and the lambda function.

A dataset is an ordered sequence of labeled vectors.  Order matters for the
sequential partition ensemble, but every adversary class may reorder freely,
so budget membership below is decided on multisets.
"""

from __future__ import annotations

import enum
import hashlib
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import CapacityExceeded, DegenerateModel, FormatError, InvalidInput, NotSaturated  # noqa: F401  (re-exported)

ABSTAIN = -1
"""Prediction value emitted by a majority ensemble on a vote tie."""

INFINITY = math.inf

# Relative slack used when rounding real-valued budgets up; keeps
# sqrt(100) from becoming 11 through 10.000000000000002.
_CEIL_SLACK = 1e-9


def ceil_int(v: float) -> int:
    return int(math.ceil(v - _CEIL_SLACK * max(1.0, abs(v))))


def floor_int(v: float) -> int:
    return int(math.floor(v + _CEIL_SLACK * max(1.0, abs(v))))


@dataclass(frozen=True)
class Example:
    x: np.ndarray
    y: int

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64).reshape(-1)
        if x.size < 1 or not np.all(np.isfinite(x)):
            raise InvalidInput("example vector must be non-empty and finite")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", int(self.y))

    def key(self) -> tuple[bytes, int]:
        return example_key(self.x, self.y)

    def __eq__(self, other):
        if not isinstance(other, Example):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


def example_key(x: np.ndarray, y: int) -> tuple[bytes, int]:
    """Canonical hashable identity of an example value (-0.0 folded into 0.0)."""
    x = np.ascontiguousarray(x, dtype=np.float64) + 0.0
    return x.tobytes(), int(y)


class Dataset:
    """Immutable ordered sequence of examples stored as ``X`` (m, d) and ``y`` (m,).

    ``n_labels`` declares the dense label range ``0..n_labels-1``.
    """

    __slots__ = ("X", "y", "n_labels")

    def __init__(self, X, y, n_labels: int | None = None, d: int | None = None):
        X = np.array(X, dtype=np.float64)
        y = np.array(y, dtype=np.int64).reshape(-1)
        if X.size == 0:
            if d is None:
                d = X.shape[1] if X.ndim == 2 else 1
            X = X.reshape(0, d)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[1] < 1:
            raise InvalidInput(f"feature matrix must be 2-D with d >= 1, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise InvalidInput(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(X)):
            raise InvalidInput("feature values must be finite")
        if y.size and y.min() < 0:
            raise InvalidInput("labels must be non-negative integers")
        inferred = int(y.max()) + 1 if y.size else 1
        if n_labels is None:
            n_labels = max(inferred, 2)
        elif n_labels < inferred:
            raise InvalidInput(f"label {inferred - 1} outside declared range 0..{n_labels - 1}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "n_labels", int(n_labels))

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    @classmethod
    def from_examples(cls, examples: Iterable[Example], n_labels: int | None = None,
                      d: int | None = None) -> "Dataset":
        examples = list(examples)
        if not examples:
            return cls(np.zeros((0, d or 1)), [], n_labels=n_labels, d=d or 1)
        return cls(np.stack([e.x for e in examples]), [e.y for e in examples], n_labels=n_labels)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.m

    def __getitem__(self, i: int) -> Example:
        return Example(self.X[i], int(self.y[i]))

    def __iter__(self) -> Iterator[Example]:
        for i in range(self.m):
            yield self[i]

    def __repr__(self):
        return f"Dataset(m={self.m}, d={self.d}, n_labels={self.n_labels})"

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], n_labels=self.n_labels, d=self.d)

    def with_labels(self, y) -> "Dataset":
        return Dataset(self.X, y, n_labels=self.n_labels, d=self.d)

    def keys(self) -> list[tuple[bytes, int]]:
        return [example_key(self.X[i], self.y[i]) for i in range(self.m)]

    def multiset(self) -> Counter:
        return Counter(self.keys())

    def occurrence_indices(self) -> np.ndarray:
        """Index j of each position: how many earlier positions hold the same value."""
        seen: Counter = Counter()
        occ = np.empty(self.m, dtype=np.int64)
        for i, k in enumerate(self.keys()):
            occ[i] = seen[k]
            seen[k] += 1
        return occ

    def concat(self, other: "Dataset") -> "Dataset":
        if other.m and self.m and other.d != self.d:
            raise InvalidInput("dimension mismatch")
        d = self.d if self.m else other.d
        return Dataset(np.vstack([self.X.reshape(-1, d), other.X.reshape(-1, d)]),
                       np.concatenate([self.y, other.y]),
                       n_labels=max(self.n_labels, other.n_labels), d=d)

    def equals(self, other: "Dataset") -> bool:
        """Sequence equality, bit-exact."""
        return (self.X.shape == other.X.shape
                and np.array_equal(self.X, other.X) and np.array_equal(self.y, other.y))


class AdversaryClass(enum.Enum):
    REPLACE = "rep"
    FLIP = "flip"
    ADD = "add"
    REMOVE = "rem"
    ADD_REMOVE = "addrem"

    @classmethod
    def parse(cls, s: "str | AdversaryClass") -> "AdversaryClass":
        if isinstance(s, cls):
            return s
        s = str(s).lower()
        for member in cls:
            if s in (member.value, member.name.lower(), member.name.lower().replace("_", "")):
                return member
        raise InvalidInput(f"unknown adversary class {s!r}")


@dataclass(frozen=True)
class BudgetRule:
    """Adversary budget as a function of the sample size.

    ``form`` is one of ``constant`` (b0), ``linear`` (beta * m),
    ``power`` (q * m**(1-c)) or ``sphere`` (c * m / sqrt(d)).  Values are
    rounded up and clamped to ``m``.
    """

    form: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.form not in ("constant", "linear", "power", "sphere"):
            raise InvalidInput(f"unknown budget form {self.form!r}")
        if self.form == "constant" and (self.a < 0 or self.a != int(self.a)):
            raise InvalidInput("constant budget must be a non-negative integer")
        if self.form == "linear" and not 0.0 <= self.a <= 1.0:
            raise InvalidInput("linear budget fraction must be in [0, 1]")
        if self.form == "power" and not (self.a > 0 and 0 < self.b <= 1):
            raise InvalidInput("power budget needs q > 0 and c in (0, 1]")
        if self.form == "sphere" and not (self.a > 0 and self.b >= 1):
            raise InvalidInput("sphere budget needs c > 0 and d >= 1")

    @classmethod
    def constant(cls, b0: int) -> "BudgetRule":
        return cls("constant", float(b0))

    @classmethod
    def linear(cls, beta: float) -> "BudgetRule":
        return cls("linear", float(beta))

    @classmethod
    def power(cls, q: float, c: float) -> "BudgetRule":
        return cls("power", float(q), float(c))

    @classmethod
    def sphere(cls, c: float, d: int) -> "BudgetRule":
        return cls("sphere", float(c), float(d))

    @classmethod
    def parse(cls, text: str) -> "BudgetRule":
        """Parse ``const:B``, ``linear:BETA``, ``power:Q,C``, ``sqrt`` or ``sphere:C,D``."""
        name, _, params = text.partition(":")
        name = name.strip().lower()
        try:
            vals = [float(p) for p in params.split(",") if p.strip()]
        except ValueError:
            raise InvalidInput(f"bad budget rule {text!r}") from None
        if name == "sqrt" and not vals:
            return cls.power(1.0, 0.5)
        table = {"const": ("constant", 1), "constant": ("constant", 1), "linear": ("linear", 1),
                 "power": ("power", 2), "sphere": ("sphere", 2)}
        if name not in table or len(vals) != table[name][1]:
            raise InvalidInput(f"bad budget rule {text!r}")
        return cls(table[name][0], *vals)

    def raw(self, m: float) -> float:
        if self.form == "constant":
            return self.a
        if self.form == "linear":
            return self.a * m
        if self.form == "power":
            return self.a * m ** (1.0 - self.b)
        return self.a * m / math.sqrt(self.b)

    def __call__(self, m: int) -> int:
        return min(int(m), max(0, ceil_int(self.raw(m))))

    def evaluate_array(self, ms: np.ndarray) -> np.ndarray:
        ms = np.asarray(ms, dtype=np.float64)
        if self.form == "constant":
            raw = np.full_like(ms, self.a)
        elif self.form == "linear":
            raw = self.a * ms
        elif self.form == "power":
            raw = self.a * ms ** (1.0 - self.b)
        else:
            raw = self.a * ms / math.sqrt(self.b)
        out = np.ceil(raw - _CEIL_SLACK * np.maximum(1.0, np.abs(raw)))
        return np.clip(out, 0, ms).astype(np.int64)

    def sublinear(self) -> bool:
        return self.form != "linear" and not (self.form == "power" and self.b == 0)

    def describe(self) -> str:
        if self.form == "constant":
            return f"const:{int(self.a)}"
        if self.form == "linear":
            return f"linear:{self.a!r}"
        return f"{self.form}:{self.a!r},{self.b!r}"


@dataclass(frozen=True)
class CertifiedPrediction:
    pred: int
    cert: float  # int, or INFINITY

    def __post_init__(self):
        if self.pred == ABSTAIN and self.cert != 0:
            raise InvalidInput("an abstaining prediction must carry certificate 0")
        if self.cert < 0:
            raise InvalidInput("certificate must be non-negative")


def zero_one_loss(pred: int, y: int) -> int:
    return 0 if pred != ABSTAIN and pred == y else 1


def _check_dims(S: Dataset, S_prime: Dataset):
    if S.m and S_prime.m and S.d != S_prime.d:
        raise InvalidInput(f"dimension mismatch: {S.d} vs {S_prime.d}")


def _instance_groups(ds: Dataset) -> dict[bytes, Counter]:
    groups: dict[bytes, Counter] = {}
    for xk, y in ds.keys():
        groups.setdefault(xk, Counter())[y] += 1
    return groups


def within_budget(S: Dataset, S_prime: Dataset, cls, b: int) -> bool:
    """Decide whether ``S_prime`` is reachable from ``S`` by adversary ``cls`` with budget ``b``."""
    cls = AdversaryClass.parse(cls)
    _check_dims(S, S_prime)
    ms, mp = S.multiset(), S_prime.multiset()
    common = sum((ms & mp).values())
    if cls is AdversaryClass.REPLACE:
        return S.m == S_prime.m and S.m - common <= b
    if cls is AdversaryClass.FLIP:
        if S.m != S_prime.m:
            return False
        ga, gb = _instance_groups(S), _instance_groups(S_prime)
        if ga.keys() != gb.keys():
            return False
        changed = 0
        for xk, labels in ga.items():
            other = gb[xk]
            if sum(labels.values()) != sum(other.values()):
                return False
            changed += sum(labels.values()) - sum((labels & other).values())
        return changed <= b
    if cls is AdversaryClass.ADD:
        return common == S.m and S_prime.m - S.m <= b
    if cls is AdversaryClass.REMOVE:
        return common == S_prime.m and S.m - S_prime.m <= b
    return common >= S.m - b and S_prime.m - common <= b


def sample_lambda(rule: BudgetRule, x: float, search_cap: int = 10**6,
                  slope_window: int = 100) -> int:
    """Smallest m with m'/b(m') >= x for every m' in [m, search_cap].

    The infinite tail is replaced by a check at the cap: the ratio there must
    already clear ``x`` and be increasing over the last ``slope_window`` sizes.
    """
    if not rule.sublinear():
        raise InvalidInput("lambda is only defined for budgets growing as o(m)")
    if search_cap < 1:
        raise InvalidInput("search_cap must be >= 1")
    ratios = lambda_ratios(rule, search_cap)
    return _lambda_from_ratios(ratios, x, slope_window)


def lambda_ratios(rule: BudgetRule, search_cap: int) -> np.ndarray:
    """Array ``r`` with ``r[m-1] = m / b(m)`` for m in 1..search_cap (inf where b = 0)."""
    ms = np.arange(1, search_cap + 1, dtype=np.float64)
    bs = rule.evaluate_array(ms).astype(np.float64)
    with np.errstate(divide="ignore"):
        return np.where(bs > 0, ms / np.where(bs > 0, bs, 1.0), np.inf)


def _lambda_from_ratios(ratios: np.ndarray, x: float, slope_window: int) -> int:
    cap = ratios.size
    w = min(slope_window, cap - 1)
    if ratios[-1] < x or (w > 0 and not ratios[-1] - ratios[-1 - w] > 0):
        raise CapacityExceeded(f"ratio m/b(m) has not settled above {x} by m = {cap}")
    bad = np.flatnonzero(ratios < x)
    return int(bad[-1]) + 2 if bad.size else 1


def lambda_table(rule: BudgetRule, xs: Sequence[float], search_cap: int = 10**6,
                 slope_window: int = 100) -> np.ndarray:
    """Vectorized ``sample_lambda`` over many x sharing one ratio table."""
    if not rule.sublinear():
        raise InvalidInput("lambda is only defined for budgets growing as o(m)")
    ratios = lambda_ratios(rule, search_cap)
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size and (ratios[-1] < xs.max()):
        raise CapacityExceeded(f"ratio m/b(m) has not settled above {xs.max()} by m = {search_cap}")
    w = min(slope_window, search_cap - 1)
    if w > 0 and not ratios[-1] - ratios[-1 - w] > 0:
        raise CapacityExceeded("ratio m/b(m) is not increasing at the search cap")
    # suffix minimum: lambda(x) is one past the last m whose ratio is below x
    suffix_min = np.minimum.accumulate(ratios[::-1])[::-1]
    return np.searchsorted(suffix_min, xs, side="left") + 1


def derive_seed(seed: int, tag: str) -> int:
    """Named sub-seed: a 64-bit hash of ``(seed, tag)`` so purposes never share streams."""
    h = hashlib.blake2b(f"{int(seed)}:{tag}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def rng_for(seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, tag))
