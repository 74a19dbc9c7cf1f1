"""Unit-sphere geometry and the halfspace certifier.

A learned halfspace on uniformly distributed sphere data can be certified at
a point by how far the point sits from the decision boundary: the band of
angular half-width theta around the boundary carries probability at most
``theta / pi`` (in the measure used by the certificate), and an adversary
must replace a comparable fraction of the sample to tilt the ERM across it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidInput, floor_int

UNIT_TOL = 1e-6


def _unit(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise InvalidInput(f"{name} must be a unit vector (norm {np.linalg.norm(v):.6g})")
    return v


@dataclass(frozen=True)
class SphereTask:
    d: int
    omega_truth: np.ndarray
    epsilon: float
    beta: float

    def __post_init__(self):
        if self.d < 2:
            raise InvalidInput("sphere tasks need d >= 2")
        w = np.asarray(self.omega_truth, dtype=np.float64).reshape(-1)
        if w.size != self.d or abs(np.linalg.norm(w) - 1.0) > 1e-9:
            raise InvalidInput("omega_truth must be a unit vector of dimension d")
        if self.epsilon < 0 or not 0.0 <= self.beta <= 1.0:
            raise InvalidInput("need epsilon >= 0 and beta in [0, 1]")
        object.__setattr__(self, "omega_truth", w)


def angle_to_halfspace(omega, x) -> float:
    """Angle between ``x`` and the hyperplane orthogonal to ``omega``, in [0, pi/2]."""
    omega, x = _unit(omega, "omega"), _unit(x, "x")
    return float(np.arcsin(np.clip(abs(float(np.dot(omega, x))), 0.0, 1.0)))


def angles_to_halfspace(omega, X) -> np.ndarray:
    omega = _unit(omega, "omega")
    X = np.asarray(X, dtype=np.float64)
    return np.arcsin(np.clip(np.abs(X @ omega), 0.0, 1.0))


def cert_from_angle(theta: float, epsilon: float, beta: float, m: int) -> int:
    if m < 1:
        raise InvalidInput("m must be >= 1")
    if theta / math.pi < 2 * beta + epsilon:
        return 0
    return max(0, floor_int((theta / (2 * math.pi) - epsilon / 2) * m))


def halfspace_cert(task: SphereTask, omega_learned, x, m: int) -> int:
    return cert_from_angle(angle_to_halfspace(omega_learned, x), task.epsilon, task.beta, m)


def halfspace_cert_batch(task: SphereTask, omega_learned, X, m: int) -> np.ndarray:
    return np.array([cert_from_angle(float(t), task.epsilon, task.beta, m)
                     for t in angles_to_halfspace(omega_learned, X)], dtype=np.int64)


def band_measure_bound(theta: float, d: int) -> float:
    """Upper bound ``theta * sqrt(2d) / sqrt(pi)`` on the sphere mass within angle theta of a hyperplane."""
    if d < 2 or theta < 0:
        raise InvalidInput("need d >= 2 and theta >= 0")
    return theta * math.sqrt(2 * d) / math.sqrt(math.pi)


def log_sphere_surface(n: int) -> float:
    """log of the surface area of the unit sphere in R^(n+1), from the even/odd closed forms.

    Even n = 2k:  2 * k! * (4 pi)^k / (2k)!.
    Odd  n = 2k-1: 2 pi^k / (k-1)!.
    """
    if n < 1:
        raise InvalidInput("n must be >= 1")
    if n % 2 == 0:
        k = n // 2
        return math.log(2) + math.lgamma(k + 1) + k * math.log(4 * math.pi) - math.lgamma(2 * k + 1)
    k = (n + 1) // 2
    return math.log(2) + k * math.log(math.pi) - math.lgamma(k)


def central_binomial_sandwich_holds(k: int) -> bool:
    """``4^k / sqrt((k+1) pi) <= C(2k, k) <= 4^k / sqrt(k pi)``, checked in log space."""
    if k < 1:
        return True
    log_c = math.lgamma(2 * k + 1) - 2 * math.lgamma(k + 1)
    lo = k * math.log(4) - 0.5 * math.log((k + 1) * math.pi)
    hi = k * math.log(4) - 0.5 * math.log(k * math.pi)
    slack = 1e-12 * max(1.0, abs(log_c))
    return lo - slack <= log_c <= hi + slack


def sphere_surface_ratio(d: int) -> float:
    """Ratio of the (d-1)-sphere's area to the d-sphere's area, S_{d-1} / S_d."""
    if d < 2:
        raise InvalidInput("d must be >= 2")
    k = d // 2
    if not central_binomial_sandwich_holds(k):
        raise ArithmeticError(f"central binomial bounds violated at k={k}")
    return math.exp(log_sphere_surface(d - 1) - log_sphere_surface(d))


def surface_ratio_bounds(d: int) -> tuple[float, float]:
    """``(sqrt(d-1), sqrt(d)) / sqrt(2 pi)``, the interval known to contain the ratio."""
    return math.sqrt(d - 1) / math.sqrt(2 * math.pi), math.sqrt(d) / math.sqrt(2 * math.pi)


def uniform_sphere_sample(d: int, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. uniform points on the unit sphere in R^d (normalized Gaussians)."""
    if d < 1 or n < 0:
        raise InvalidInput("need d >= 1 and n >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    while True:
        G = rng.standard_normal((n, d))
        norms = np.linalg.norm(G, axis=1)
        if np.all(norms > 0):
            return G / norms[:, None]


def vc_epsilon(m: int, d: int, delta: float) -> float:
    """Heuristic uniform-convergence slack ``sqrt((d ln(2m/d) + ln(2/delta)) / m)``."""
    if m < 1 or d < 1 or not 0 < delta < 1:
        raise InvalidInput("need m >= 1, d >= 1 and delta in (0, 1)")
    return math.sqrt((d * math.log(max(2 * m / d, 1.0)) + math.log(2 / delta)) / m)


__all__ = ["SphereTask", "angle_to_halfspace", "angles_to_halfspace", "cert_from_angle",
           "halfspace_cert", "halfspace_cert_batch", "band_measure_bound", "log_sphere_surface",
           "sphere_surface_ratio", "surface_ratio_bounds", "central_binomial_sandwich_holds",
           "uniform_sphere_sample", "vc_epsilon"]
