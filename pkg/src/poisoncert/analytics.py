"""Empirical risk, robustness and certified-correctness estimators.

For the 0-1 loss, adversarial risk at budget b is the fraction of test
points whose robustness is at most b, and mean robustness is the sum of the
complementary fractions below a saturation budget.  Both identities hold
exactly on empirical measures; ``verify_identities`` checks them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import INFINITY, CertifiedPrediction, Dataset, InvalidInput, NotSaturated, zero_one_loss

TRUNCATED = "> b_max"


@dataclass(frozen=True)
class RobustnessProfile:
    """Per-point robustness values: integers, ``inf`` (never vulnerable) or ``nan`` (above b_max)."""

    values: np.ndarray
    b_max: int

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        finite = v[np.isfinite(v)]
        if finite.size and (finite.min() < 0 or np.any(finite != np.floor(finite))
                            or finite.max() > self.b_max):
            raise InvalidInput("finite robustness values must be integers in [0, b_max]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_values(cls, values: Sequence, b_max: int) -> "RobustnessProfile":
        """Accepts ints, ``inf``/"inf", and ``None``/"> b_max" for truncated entries."""
        out = []
        for r in values:
            if r is None or r == TRUNCATED:
                out.append(math.nan)
            elif r == "inf" or r == INFINITY:
                out.append(math.inf)
            else:
                out.append(float(r))
        return cls(np.array(out, dtype=np.float64), int(b_max))

    @property
    def n_test(self) -> int:
        return self.values.size

    def to_json(self) -> str:
        enc = ["inf" if np.isinf(v) else TRUNCATED if np.isnan(v) else int(v) for v in self.values]
        return json.dumps({"b_max": self.b_max, "values": enc})

    @classmethod
    def from_json(cls, text: str) -> "RobustnessProfile":
        d = json.loads(text)
        return cls.from_values(d["values"], d["b_max"])

    def histogram(self) -> dict:
        hist: dict = {}
        for v in self.values:
            k = "inf" if np.isinf(v) else TRUNCATED if np.isnan(v) else str(int(v))
            hist[k] = hist.get(k, 0) + 1
        return hist


def _check_budget(profile: RobustnessProfile, b: int):
    if b < 0:
        raise InvalidInput("budget must be >= 0")
    if b > profile.b_max:
        raise InvalidInput(f"budget {b} exceeds b_max {profile.b_max}; truncated entries are unknown")


def risk_at_budget(profile: RobustnessProfile, b: int) -> float:
    _check_budget(profile, b)
    if profile.n_test == 0:
        raise InvalidInput("empty profile")
    v = profile.values
    return float(np.count_nonzero(np.isfinite(v) & (v <= b)) / v.size)


def saturation_budget(profile: RobustnessProfile) -> int:
    """Smallest budget at which empirical risk reaches 1."""
    v = profile.values
    if v.size == 0:
        raise InvalidInput("empty profile")
    if not np.all(np.isfinite(v)):
        raise NotSaturated("profile has never-vulnerable or truncated entries; risk never reaches 1")
    return int(v.max())


def expected_robustness(profile: RobustnessProfile) -> float:
    """Sum of correct fractions ``1 - risk_i`` over budgets below the saturation budget."""
    b_star = saturation_budget(profile)
    return math.fsum(1.0 - risk_at_budget(profile, i) for i in range(b_star))


def verify_identities(profile: RobustnessProfile, measured_risks: Sequence[float] | None = None) -> float:
    """Maximum deviation over both risk/robustness identities.

    ``measured_risks[b]``, if given, are adversarial risks measured
    independently (e.g. attack success fractions) for b = 0..len-1, compared
    against the fraction of robustness values at most b.  Without them the
    fraction is recomputed by a sorted search and compared with the direct
    count.
    """
    b_star = saturation_budget(profile)
    v = np.sort(profile.values)
    n = v.size
    dev = 0.0
    budgets = range(b_star + 1) if measured_risks is None else range(len(measured_risks))
    for b in budgets:
        by_count = risk_at_budget(profile, min(b, profile.b_max))
        other = (np.searchsorted(v, b, side="right") / n if measured_risks is None
                 else float(measured_risks[b]))
        dev = max(dev, abs(by_count - other))
    mean = math.fsum(profile.values) / n
    dev = max(dev, abs(mean - (b_star - math.fsum(risk_at_budget(profile, i)
                                                   for i in range(b_star)))))
    return dev


def _certs(model, test: Dataset) -> list[CertifiedPrediction]:
    if callable(model):
        return [model(test.X[i]) for i in range(test.m)]
    certs = list(model)
    if len(certs) != test.m:
        raise InvalidInput("one certified prediction per test example is required")
    return certs


def certified_accuracy(model, test: Dataset, b: int) -> float:
    """Fraction of test points predicted correctly with certificate at least ``b``.

    ``model`` is a callable ``x -> CertifiedPrediction`` or a precomputed
    sequence aligned with ``test``.
    """
    if test.m == 0:
        raise InvalidInput("empty test set")
    certs = _certs(model, test)
    ok = sum(1 for c, y in zip(certs, test.y) if zero_one_loss(c.pred, int(y)) == 0 and c.cert >= b)
    return ok / test.m


def profile_from_certificates(certs: Sequence[CertifiedPrediction], test: Dataset) -> np.ndarray:
    """Lower bounds on robustness: 0 where wrong, the certificate where right."""
    return np.array([0.0 if zero_one_loss(c.pred, int(y)) else float(c.cert)
                     for c, y in zip(certs, test.y)])


def curve_rows(certs: Sequence[CertifiedPrediction], test: Dataset, b_max: int,
               profile: RobustnessProfile | None = None) -> list[tuple[int, float, float, float]]:
    """(budget, risk, certified_accuracy, correct_fraction) for budgets 0..b_max.

    Risk is exact when a robustness profile is supplied; otherwise it is the
    certificate-implied upper bound: the fraction wrong or certified at most b.
    """
    certs = list(certs)
    lower = profile_from_certificates(certs, test)
    correct = float(np.mean([zero_one_loss(c.pred, int(y)) == 0 for c, y in zip(certs, test.y)]))
    rows = []
    for b in range(b_max + 1):
        risk = risk_at_budget(profile, b) if profile is not None else float(np.mean(lower <= b))
        rows.append((b, risk, certified_accuracy(certs, test, b), correct))
    return rows


def mean_with_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return float(v.mean()) if v.size else math.nan, math.inf
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


__all__ = ["RobustnessProfile", "risk_at_budget", "saturation_budget", "expected_robustness",
           "verify_identities", "certified_accuracy", "profile_from_certificates", "curve_rows",
           "mean_with_stderr", "TRUNCATED"]

