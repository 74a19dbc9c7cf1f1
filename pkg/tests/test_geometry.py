import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from poisoncert import attacks
from poisoncert.core import AdversaryClass, Dataset, Example, InvalidInput
from poisoncert.geometry import (SphereTask, angle_to_halfspace, angles_to_halfspace,
                                 band_measure_bound, central_binomial_sandwich_holds,
                                 cert_from_angle, halfspace_cert, halfspace_cert_batch,
                                 log_sphere_surface, sphere_surface_ratio, surface_ratio_bounds,
                                 uniform_sphere_sample, vc_epsilon)
from poisoncert.learners import LearnerSpec, halfspace_erm


def test_angle_examples():
    w = np.array([1.0, 0.0, 0.0])
    assert angle_to_halfspace(w, w) == pytest.approx(math.pi / 2)
    assert angle_to_halfspace(w, [0.0, 1.0, 0.0]) == 0.0
    assert angle_to_halfspace(w, np.array([1.0, 1.0, 0.0]) / math.sqrt(2)) == pytest.approx(math.pi / 4)
    with pytest.raises(InvalidInput):
        angle_to_halfspace(w, [2.0, 0.0, 0.0])


def test_cert_examples():
    assert cert_from_angle(0.4 * math.pi, 0.01, 0.0, 1000) == 195
    assert cert_from_angle(math.pi / 2, 0.0, 0.0, 100) == 25
    # gate: theta/pi = 0.1 < 2 * 0.05 + 0.01
    assert cert_from_angle(0.1 * math.pi, 0.01, 0.05, 1000) == 0


@given(st.floats(0, math.pi / 2), st.floats(0, math.pi / 2), st.floats(0, 0.2), st.floats(0, 0.2),
       st.floats(0, 0.3), st.integers(1, 10**5))
def test_cert_monotonicity(t1, t2, e1, e2, beta, m):
    lo, hi = sorted((t1, t2))
    assert cert_from_angle(lo, e1, beta, m) <= cert_from_angle(hi, e1, beta, m)
    elo, ehi = sorted((e1, e2))
    assert cert_from_angle(lo, ehi, beta, m) <= cert_from_angle(lo, elo, beta, m)


def test_batch_matches_pointwise(rng):
    task = SphereTask(4, np.array([1.0, 0, 0, 0]), 0.01, 0.02)
    X = uniform_sphere_sample(4, 50, rng)
    w = uniform_sphere_sample(4, 1, rng)[0]
    assert halfspace_cert_batch(task, w, X, 500).tolist() == [halfspace_cert(task, w, x, 500) for x in X]
    assert np.allclose(angles_to_halfspace(w, X), [angle_to_halfspace(w, x) for x in X])


def test_task_validation():
    with pytest.raises(InvalidInput):
        SphereTask(3, np.array([1.0, 1.0, 0.0]), 0.1, 0.1)
    with pytest.raises(InvalidInput):
        SphereTask(3, np.array([1.0, 0.0, 0.0]), -0.1, 0.1)


# --- band bound -----------------------------------------------------------------

def test_band_bound_examples():
    assert band_measure_bound(0.0, 5) == 0.0
    assert band_measure_bound(0.1, 3) == pytest.approx(0.1 * math.sqrt(6) / math.sqrt(math.pi))
    assert band_measure_bound(0.2, 7) == pytest.approx(2 * band_measure_bound(0.1, 7))


def test_band_monte_carlo_d3(rng):
    n = 200_000
    X = uniform_sphere_sample(3, n, rng)
    p = np.mean(np.abs(X[:, 0]) <= math.sin(0.1))
    assert abs(p - math.sin(0.1)) < 4 * math.sqrt(0.1 * 0.9 / n)  # exact band area in d = 3
    assert p <= band_measure_bound(0.1, 3)


# --- surface ratios ----------------------------------------------------------------

def test_surface_ratio_examples():
    assert sphere_surface_ratio(2) == pytest.approx(0.5)
    lo, hi = surface_ratio_bounds(2)
    assert lo == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert hi == pytest.approx(math.sqrt(2) / math.sqrt(2 * math.pi))
    r = sphere_surface_ratio(100)
    assert math.sqrt(99 / (2 * math.pi)) <= r <= math.sqrt(100 / (2 * math.pi))


def test_surface_closed_forms():
    # the n-sphere lives in R^(n+1) and has area 2 pi^((n+1)/2) / Gamma((n+1)/2)
    for n in range(1, 60):
        assert log_sphere_surface(n) == pytest.approx(
            math.log(2) + (n + 1) / 2 * math.log(math.pi) - math.lgamma((n + 1) / 2), rel=1e-12)
    assert math.exp(log_sphere_surface(1)) == pytest.approx(2 * math.pi)
    assert math.exp(log_sphere_surface(2)) == pytest.approx(4 * math.pi)
    assert math.isfinite(log_sphere_surface(10**6))


def test_ratio_sandwich_over_range():
    for d in list(range(2, 3000, 7)) + [10**4, 10**6]:
        lo, hi = surface_ratio_bounds(d)
        assert lo <= sphere_surface_ratio(d) <= hi


def test_binomial_sandwich():
    assert all(central_binomial_sandwich_holds(k) for k in range(1, 400))
    k = 10
    assert 4**k / math.sqrt((k + 1) * math.pi) <= math.comb(2 * k, k)


# --- sampling --------------------------------------------------------------------

def test_samples_unit_norm_and_seeded():
    X = uniform_sphere_sample(5, 1000, 3)
    assert np.all(np.abs(np.linalg.norm(X, axis=1) - 1) <= 1e-9)
    assert np.array_equal(X, uniform_sphere_sample(5, 1000, 3))
    assert uniform_sphere_sample(3, 0, 1).shape == (0, 3)


def test_sample_coordinate_means():
    X = uniform_sphere_sample(3, 100_000, 11)
    assert np.all(np.abs(X.mean(axis=0)) < 3 * (1 / math.sqrt(3)) / math.sqrt(1e5) + 1e-3)
    assert np.all(np.abs(X.mean(axis=0)) < 0.02)


def test_vc_epsilon():
    m, d, delta = 1000, 3, 0.05
    assert vc_epsilon(m, d, delta) == pytest.approx(
        math.sqrt((d * math.log(2 * m / d) + math.log(2 / delta)) / m))
    assert vc_epsilon(10 * m, d, delta) < vc_epsilon(m, d, delta)
    with pytest.raises(InvalidInput):
        vc_epsilon(10, 3, 0.0)


# --- soundness on an exactly epsilon-representative planar sample ----------------

def exact_deviation_2d(X, y, truth):
    """sup over unit normals w of |angle(w, truth)/pi - empirical risk of w| on (X, y)."""
    crit = []
    for x in X:
        base = math.atan2(x[1], x[0])
        crit += [base + math.pi / 2, base - math.pi / 2]
    crit.append(math.atan2(truth[1], truth[0]))
    worst = 0.0
    for a in crit:
        for da in (-1e-9, 0.0, 1e-9):
            w = np.array([math.cos(a + da), math.sin(a + da)])
            pop = math.acos(np.clip(w @ truth, -1, 1)) / math.pi
            emp = np.mean((X @ w >= 0).astype(int) != y)
            worst = max(worst, abs(pop - emp))
    return worst


def test_halfspace_cert_sound_when_sample_is_representative(rng):
    truth = np.array([1.0, 0.0])
    m = 40
    X = uniform_sphere_sample(2, m, rng)
    y = (X @ truth >= 0).astype(int)
    S = Dataset(X, y)
    eps = exact_deviation_2d(X, y, truth) + 1e-9
    task = SphereTask(2, truth, eps, 1 / m)
    w = halfspace_erm(X, y)
    checked = 0
    for x in uniform_sphere_sample(2, 40, rng):
        cert = halfspace_cert(task, w, x, m)
        if cert < 2:
            continue
        pred = int(x @ w >= 0)
        pool = [Example(x, 1 - pred), Example(-x, pred)]
        found = attacks.brute_force_search(S, LearnerSpec("halfspace"), Example(x, pred),
                                           AdversaryClass.REPLACE, min(cert - 1, 2), pool,
                                           reference=pred)
        assert found is None
        checked += 1
    print(f"{checked} certified points attacked")
    assert checked >= 1
