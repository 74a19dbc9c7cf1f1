"""Desk-scale end-to-end experiments with pass/fail verdicts.

Each ``run_*`` function is self-contained, seeded, and returns a
:class:`Verdict`; the CLI's ``reproduce`` command and the acceptance tests
both call them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import analytics, attacks, exactcert, geometry, robust
from .core import (AdversaryClass, BudgetRule, Dataset, Example, ceil_int, lambda_table, rng_for)
from .data import gen_sphere_halfspace, gen_two_circles, load_mnist_idx, sphere_labels
from .learners import LearnerSpec, halfspace_erm, neighbor_order, train


@dataclass
class Verdict:
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.summary} ({self.seconds:.1f}s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        v = fn(*args, **kwargs)
        v.seconds = time.perf_counter() - t0
        return v
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# K-NN replacement robustness against the exhaustive oracle


def random_knn_instance(rng, max_m=12, d=2, ks=(1, 3, 5)):
    """Small K-NN task on a coarse grid (so distance ties occur) with spatially coherent labels."""
    K = int(rng.choice(ks))
    n_labels = int(rng.integers(2, 4))
    m = int(rng.integers(K, max_m + 1))
    X = rng.integers(-3, 4, size=(m, d)).astype(np.float64)
    region = (X[:, 0] > 0).astype(np.int64) % n_labels
    y = np.where(rng.random(m) < 0.75, region, rng.integers(0, n_labels, size=m))
    S = Dataset(X, y, n_labels=n_labels)
    q = rng.integers(-3, 4, size=d).astype(np.float64)
    if rng.random() < 0.8:
        label = int(train(LearnerSpec("knn", K), S).predict(q))
    else:
        label = int(rng.integers(0, n_labels))
    return S, K, Example(q, label)


@_timed
def run_knn_replace_exactness(n_instances: int = 200, seed: int = 0) -> Verdict:
    """Exact replacement robustness of K-NN equals the pool-restricted oracle."""
    rng = rng_for(seed, "knn-replace-exactness")
    matches, mismatches = 0, []
    for i in range(n_instances):
        S, K, e = random_knn_instance(rng)
        value = exactcert.knn_rob_replace(S, K, e)
        pool = [Example(e.x, lab) for lab in range(S.n_labels)]
        oracle = attacks.exact_robustness(S, LearnerSpec("knn", K), e, AdversaryClass.REPLACE,
                                          b_max=value, pool=pool)
        if oracle == value:
            matches += 1
        else:
            mismatches.append({"instance": i, "formula": value, "oracle": oracle})
    return Verdict("K-NN replacement robustness exactness", not mismatches,
                   f"{matches}/{n_instances} oracle matches", {"mismatches": mismatches[:10]})


# ---------------------------------------------------------------------------
# Risk / robustness identities


@_timed
def run_identities(n_profiles: int = 100, seed: int = 0) -> Verdict:
    rng = rng_for(seed, "identities")
    worst = 0.0
    for i in range(n_profiles):
        if i % 2 == 0:
            b_max = int(rng.integers(0, 30))
            vals = rng.integers(0, b_max + 1, size=int(rng.integers(1, 200)))
        else:
            # robustness of real K-NN predictions on a small synthetic task
            S, K, _ = random_knn_instance(rng, max_m=40)
            tests = [Example(rng.integers(-3, 4, size=2).astype(float), int(rng.integers(0, S.n_labels)))
                     for _ in range(30)]
            vals = np.array([exactcert.knn_rob_replace(S, K, e) for e in tests])
            b_max = int(vals.max())
        profile = analytics.RobustnessProfile.from_values(vals.tolist(), b_max)
        worst = max(worst, analytics.verify_identities(profile))
    return Verdict("risk/robustness identities", worst <= 1e-12,
                   f"max deviation {worst:.3g} over {n_profiles} profiles (tolerance 1e-12)",
                   {"max_deviation": worst})


# ---------------------------------------------------------------------------
# Ensemble certificate soundness


def random_ensemble_config(rng):
    scheme = robust.Scheme.SEQUENTIAL if rng.random() < 0.5 else robust.Scheme.HASHED
    m = int(rng.integers(4, 13))
    t = int(rng.integers(min(3, m), min(6, m) + 1))
    n_labels = int(rng.integers(2, 4))
    grid = int(rng.integers(2, 4))
    X = rng.integers(0, grid, size=(m, 1)).astype(np.float64)
    # labels mostly follow the instance so votes have real margins
    y = np.where(rng.random(m) < 0.9, X[:, 0].astype(np.int64) % n_labels,
                 rng.integers(0, n_labels, size=m))
    S = Dataset(X, y, n_labels=n_labels)
    if rng.random() < 0.5:
        base = LearnerSpec("table", seed=int(rng.integers(0, 2**31)))
    else:
        k_max = (m // t) if scheme is robust.Scheme.SEQUENTIAL else 1
        base = LearnerSpec("knn", int(rng.choice([k for k in (1, 3) if k <= k_max] or [1])),
                           seed=int(rng.integers(0, 2**31)))
    cls = AdversaryClass.FLIP if rng.random() < 0.5 else AdversaryClass.REPLACE
    target = np.array([float(rng.integers(0, grid))])
    pool = [Example(np.array([float(v)]), lab) for v in range(grid) for lab in range(n_labels)]
    pool = [pool[i] for i in rng.choice(len(pool), size=min(4, len(pool)), replace=False)]
    return S, t, scheme, base, cls, target, pool


@_timed
def run_ensemble_soundness(n_configs: int = 500, seed: int = 0) -> Verdict:
    rng = rng_for(seed, "ensemble-soundness")
    violations, checked, nontrivial, perturbations = [], 0, 0, 0
    while checked < n_configs:
        S, t, scheme, base, cls, target, pool = random_ensemble_config(rng)
        try:
            E = robust.rlrn_train(base, S, BudgetRule.constant(1), scheme, t=t)
        except robust.DegenerateModel:
            continue
        checked += 1
        cp = robust.ensemble_certify(E, target, cls)
        if cp.cert < 2:
            continue  # only budget 0 (the clean data) lies strictly below the certificate
        nontrivial += 1
        tgt = Example(target, 0)
        perturbations += attacks.enumeration_size(S.m, cls, int(cp.cert) - 1, len(pool), S.n_labels)
        found = attacks.brute_force_search(S, E.retrain, tgt, cls, int(cp.cert) - 1, pool,
                                           reference=cp.pred)
        if found is not None:
            violations.append({"scheme": scheme.value, "class": cls.value, "cert": cp.cert,
                               "budget": found[1].budget})
    return Verdict("ensemble certificate soundness", not violations,
                   f"{len(violations)} violations over {checked} configurations "
                   f"({nontrivial} with certificate >= 2, {perturbations} perturbed datasets retrained)",
                   {"violations": violations[:10], "nontrivial": nontrivial})


# ---------------------------------------------------------------------------
# Rotation attack against exact ERM in d = 3


@_timed
def run_rotation_attack(m: int = 2000, n_targets: int = 500, c: float = 20.0, seed: int = 0,
               threshold: float = 0.90) -> Verdict:
    d = 3
    rng = rng_for(seed, "rotation-attack")
    omega = geometry.uniform_sphere_sample(d, 1, rng)[0]
    S = gen_sphere_halfspace(m, d, omega, rng)
    b = BudgetRule.sphere(c, d)(m)
    targets = geometry.uniform_sphere_sample(d, n_targets, rng)
    labels = sphere_labels(targets, omega)
    wins, over_budget, flips = 0, 0, []
    for x, y in zip(targets, labels):
        S2 = attacks.rotation_flip_attack(S, Example(x, int(y)), omega)
        changed = int(np.count_nonzero(S2.y != S.y))
        flips.append(changed)
        if changed > b:
            over_budget += 1
            continue
        w = halfspace_erm(S2.X, S2.y)
        if int(x @ w >= 0) != int(y):
            wins += 1
    rate = wins / n_targets
    return Verdict("rotation attack success", rate >= threshold and over_budget == 0,
                   f"success {rate:.3f} (need >= {threshold}) with budget b = {b}, "
                   f"mean flips {np.mean(flips):.1f}",
                   {"rate": rate, "budget": b, "over_budget": over_budget})


# ---------------------------------------------------------------------------
# Halfspace certification on the sphere


def epsilon_representativeness(S: Dataset, omega_truth, hypotheses) -> float:
    """Largest |population risk - empirical risk| over the given unit normals.

    Under the uniform sphere distribution the population risk of normal w
    against the truth is angle(w, truth) / pi.
    """
    worst = 0.0
    for w in hypotheses:
        pop = math.acos(float(np.clip(np.dot(w, omega_truth), -1, 1))) / math.pi
        emp = float(np.mean((S.X @ w >= 0).astype(np.int64) != S.y))
        worst = max(worst, abs(pop - emp))
    return worst


def _sphere_pool(x, y, size, rng):
    pool = [Example(x, 1 - y)]
    while len(pool) < size:
        z = x + 0.05 * rng.standard_normal(x.size)
        pool.append(Example(z / np.linalg.norm(z), 1 - y))
    return pool


@_timed
def run_halfspace_certification(d: int = 10, m: int = 20000, n_test: int = 2000, c: float = 1 / 502,
               seed: int = 0, threshold: float = 0.94, spot_m: int = 60, spot_points: int = 50,
               spot_pool: int = 3, spot_budget_cap: int = 1) -> Verdict:
    rng = rng_for(seed, "halfspace-certification")
    omega = geometry.uniform_sphere_sample(d, 1, rng)[0]
    eps = c / (100 * math.sqrt(d))
    S = gen_sphere_halfspace(m, d, omega, rng)
    b = BudgetRule.sphere(c, d)(m)
    task = geometry.SphereTask(d, omega, eps, b / m)
    w = halfspace_erm(S.X, S.y)
    test = gen_sphere_halfspace(n_test, d, omega, rng)
    certs = geometry.halfspace_cert_batch(task, w, test.X, m)
    preds = (test.X @ w >= 0).astype(np.int64)
    ccor = float(np.mean((preds == test.y) & (certs >= b)))
    proven_floor = 1 - 2 * math.sqrt(2 * math.pi) * c - math.sqrt(2 * math.pi * d) * eps

    # brute-force spot check on a reduced sample
    S_small = gen_sphere_halfspace(spot_m, d, omega, rng)
    b_small = BudgetRule.sphere(c, d)(spot_m)
    task_small = geometry.SphereTask(d, omega, eps, b_small / spot_m)
    w_small = halfspace_erm(S_small.X, S_small.y)
    probes = [w_small, omega] + list(geometry.uniform_sphere_sample(d, 500, rng))
    eps_hat = epsilon_representativeness(S_small, omega, probes)
    spot = gen_sphere_halfspace(spot_points, d, omega, rng)
    violations, attempted, skipped_budgets = [], 0, 0
    learner = LearnerSpec("halfspace")
    for x, y in zip(spot.X, spot.y):
        cert = geometry.halfspace_cert(task_small, w_small, x, spot_m)
        pred = int(x @ w_small >= 0)
        top = min(cert - 1, spot_budget_cap)
        skipped_budgets += max(0, cert - 1 - top)
        if top < 1:
            continue
        attempted += 1
        pool = _sphere_pool(x, pred, spot_pool, rng)
        found = attacks.brute_force_search(S_small, learner, Example(x, pred), AdversaryClass.REPLACE,
                                           top, pool, reference=pred)
        if found is not None:
            violations.append({"cert": cert, "budget": found[1].budget,
                               "angle": geometry.angle_to_halfspace(w_small, x)})
    passed = ccor >= threshold and not violations
    return Verdict(
        "halfspace certified correctness",
        passed,
        f"CCor {ccor:.4f} at b = {b} (need >= {threshold}; theoretical floor {proven_floor:.4f}); "
        f"spot check: {len(violations)} violations on {attempted} points "
        f"(m = {spot_m}, pool {spot_pool}, budgets <= min(cert-1, {spot_budget_cap}); "
        f"sample deviation {eps_hat:.3f} vs epsilon {eps:.2g})",
        {"ccor": ccor, "budget": b, "violations": violations, "eps_hat": eps_hat,
         "skipped_budgets": skipped_budgets, "attempted": attempted})


# ---------------------------------------------------------------------------
# Lambda function


def ceil_sqrt(n: np.ndarray) -> np.ndarray:
    """Exact integer ceil(sqrt(n)) for n >= 1."""
    n = np.asarray(n, dtype=np.int64)
    r = np.floor(np.sqrt(n.astype(np.float64))).astype(np.int64)
    r -= (r * r > n)
    r += ((r + 1) * (r + 1) <= n)
    return r + (r * r < n)


@_timed
def run_lambda(cap: int = 10**6, x_max: float = 100.0) -> Verdict:
    rule = BudgetRule.power(1.0, 0.5)
    ms = np.arange(1, cap + 1, dtype=np.int64)
    bs = ceil_sqrt(ms)
    ratio = ms / bs
    # lambda is a step function of x that jumps just past attained ratio values,
    # so its worst ratio to x^2 is found at those values and just above them
    attained = np.unique(ratio[(ratio >= 1) & (ratio <= x_max)])
    xs = np.unique(np.concatenate([attained, np.nextafter(attained, np.inf),
                                   np.linspace(1, x_max, 20001)]))
    xs = xs[xs <= x_max]
    lam = lambda_table(rule, xs, search_cap=cap)
    worst = float(np.max(lam / xs**2))
    # Def property, checked with integer budgets independent of the library
    suffix_min = np.minimum.accumulate(ratio[::-1])[::-1]
    holds = suffix_min[lam - 1] >= xs
    minimal = (lam == 1) | (suffix_min[np.maximum(lam - 2, 0)] < xs)
    ok = worst <= 4 and bool(holds.all()) and bool(minimal.all())
    return Verdict("lambda growth bound", ok,
                   f"max lambda(x)/x^2 = {worst:.4f} over {xs.size} x values (need <= 4); "
                   f"tail property holds for all, minimality for all: {bool(holds.all() and minimal.all())}",
                   {"worst_ratio": worst})


# ---------------------------------------------------------------------------
# Sphere facts


@_timed
def run_sphere_facts(d_max: int = 10**4, n_samples: int = 10**6, seed: int = 0) -> Verdict:
    bad_ratio = []
    for d in range(2, d_max + 1):
        r = geometry.sphere_surface_ratio(d)
        lo, hi = geometry.surface_ratio_bounds(d)
        if not lo <= r <= hi:
            bad_ratio.append(d)
    bad_band, rows = [], []
    rng = rng_for(seed, "band")
    for theta in (0.01, 0.1, 0.5):
        for d in (3, 10, 100):
            hits, chunk, done = 0, 100_000, 0
            while done < n_samples:
                n = min(chunk, n_samples - done)
                first = geometry.uniform_sphere_sample(d, n, rng)[:, 0]
                hits += int(np.count_nonzero(np.abs(first) <= math.sin(theta)))
                done += n
            p = hits / n_samples
            bound = geometry.band_measure_bound(theta, d)
            q = min(bound, 1.0)
            sigma = math.sqrt(q * (1 - q) / n_samples)
            rows.append((theta, d, p, bound))
            if p > bound + 4 * sigma:
                bad_band.append((theta, d, p, bound))
    ok = not bad_ratio and not bad_band
    return Verdict("sphere surface ratio and band bound", ok,
                   f"ratio sandwich violations {len(bad_ratio)} for d in [2, {d_max}]; "
                   f"band violations {len(bad_band)} of 9 (4-sigma)",
                   {"band": rows, "bad_ratio": bad_ratio[:10]})


# ---------------------------------------------------------------------------
# MNIST K-NN robustness trend


def mnist_split(images, labels, n_train=2000, n_test=500, seed=0):
    full = load_mnist_idx(images, labels)
    order = rng_for(seed, "mnist-split").permutation(full.m)
    return full.subset(order[:n_train]), full.subset(order[n_train:n_train + n_test])


def knn_robustness_table(S: Dataset, test: Dataset, ks=(1, 3, 5, 7, 9)):
    """Per test point and K: exact replacement and removal robustness."""
    rep = np.zeros((test.m, len(ks)))
    rem = np.zeros((test.m, len(ks)))
    for i in range(test.m):
        e = test[i]
        for j, K in enumerate(ks):
            rep[i, j] = exactcert.knn_rob_replace(S, K, e)
            rem[i, j] = exactcert.knn_rob_remove(S, K, e)
    return rep, rem


@_timed
def run_mnist_robustness_trend(images, labels, n_train=2000, n_test=500, seed=0, ks=(1, 3, 5, 7, 9)) -> Verdict:
    S, test = mnist_split(images, labels, n_train, n_test, seed)
    rep, rem = knn_robustness_table(S, test, ks)
    means = rep.mean(axis=0)
    trend_ok, steps = True, []
    for j in range(len(ks) - 1):
        diff = rep[:, j + 1] - rep[:, j]
        se = diff.std(ddof=1) / math.sqrt(diff.size)
        steps.append((ks[j], ks[j + 1], float(diff.mean()), float(se)))
        if diff.mean() < -3 * se:
            trend_ok = False
    k5 = ks.index(5)
    rem5 = rem[:, k5]
    finite_rem = np.where(np.isinf(rem5), n_train, rem5)  # never-vulnerable counts as the max
    gap = finite_rem - rep[:, k5]
    se_gap = gap.std(ddof=1) / math.sqrt(gap.size)
    rem_ok = gap.mean() > 3 * se_gap
    return Verdict("K-NN robustness trend on MNIST", trend_ok and rem_ok,
                   "mean Rep robustness by K: " + ", ".join(f"K={k}: {v:.3f}" for k, v in zip(ks, means))
                   + f"; K=5 Rem {np.mean(finite_rem):.2f} vs Rep {means[k5]:.2f}",
                   {"means": means.tolist(), "steps": steps, "rem_mean": float(np.mean(finite_rem))})


def accuracy_under_replacement(S: Dataset, test: Dataset, ks=(1, 3, 5, 7, 9), b_max: int = 20):
    """Rows (K, b, accuracy) where accuracy is the fraction still correct after any b replacements."""
    rep, _ = knn_robustness_table(S, test, ks)
    rows = []
    for j, K in enumerate(ks):
        profile = analytics.RobustnessProfile(rep[:, j], int(rep[:, j].max()))
        for b in range(b_max + 1):
            risk = analytics.risk_at_budget(profile, min(b, profile.b_max))
            rows.append((K, b, 1.0 - risk))
    return rows


@_timed
def run_mnist_accuracy_curves(images, labels, n_train=2000, n_test=500, seed=0, ks=(1, 3, 5, 7, 9),
              b_max: int = 20) -> Verdict:
    """Accuracy under replacement poisoning by K; checks the curves are non-increasing in b."""
    S, test = mnist_split(images, labels, n_train, n_test, seed)
    rows = accuracy_under_replacement(S, test, ks, b_max)
    monotone = all(a[2] >= b[2] for a, b in zip(rows, rows[1:]) if a[0] == b[0])
    by_k = {K: [acc for k, _, acc in rows if k == K] for K in ks}
    at = min(5, b_max)
    return Verdict("K-NN accuracy under replacement on MNIST", monotone,
                   "clean accuracy " + ", ".join(f"K={K}: {v[0]:.3f}" for K, v in by_k.items())
                   + f"; at b = {at}: " + ", ".join(f"K={K}: {v[at]:.3f}" for K, v in by_k.items()),
                   {"rows": rows})


# ---------------------------------------------------------------------------
# Subsample learner against a fixed replacement


@_timed
def run_subsample_hits(m: int = 10**4, n_seeds: int = 200, seed: int = 0) -> Verdict:
    rule = BudgetRule.power(1.0, 0.5)
    b = rule(m)
    S = gen_two_circles(m, rng_for(seed, "subsample-data").integers(2**63))
    replaced = np.sort(rng_for(seed, "subsample-positions").choice(m, size=b, replace=False))
    hits = 0
    for r in range(n_seeds):
        idx = robust.wr_indices(m, rule, int(rng_for(seed, f"retrain-{r}").integers(2**63)))
        hits += int(np.intersect1d(idx, replaced).size > 0)
    p_hat = hits / n_seeds
    p_bound = math.sqrt(b / m)
    sigma = math.sqrt(p_bound * (1 - p_bound) / n_seeds)
    limit = p_bound + 3 * sigma
    k = robust.wr_subsample_size(m, rule)
    exact = 1 - math.comb(m - b, k) / math.comb(m, k)
    return Verdict("subsample learner hit probability", p_hat <= limit,
                   f"hit rate {p_hat:.3f} over {n_seeds} seeds (limit {limit:.4f}; "
                   f"exact {exact:.4f}; k = {k}, b = {b})",
                   {"p_hat": p_hat, "limit": limit, "exact": exact})


__all__ = ["Verdict", "run_knn_replace_exactness", "run_identities", "run_ensemble_soundness", "run_rotation_attack",
           "run_halfspace_certification", "run_lambda", "run_sphere_facts", "run_mnist_robustness_trend", "run_mnist_accuracy_curves",
           "accuracy_under_replacement", "run_subsample_hits",
           "epsilon_representativeness", "random_knn_instance", "random_ensemble_config",
           "mnist_split", "knn_robustness_table", "ceil_sqrt"]
