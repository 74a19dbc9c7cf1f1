"""Base learners: homogeneous-halfspace ERM, K-nearest-neighbors and an exact-match table.

Every learner is a deterministic function of the training sequence and its
seed, so an adversary who fixes the seed can replay training exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from . import _kernels
from .core import Dataset, InvalidInput, example_key, rng_for

SWEEP_MIN_WIDTH = 1e-12
PARALLEL_TOL = 1e-12
POCKET_RESTARTS = 32
POCKET_EPOCHS = 10
PERCEPTRON_WARM_EPOCHS = 100
PEEL_ROUNDS = 64


@dataclass(frozen=True)
class LearnerSpec:
    kind: str  # "halfspace" | "knn" | "table"
    k: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("halfspace", "knn", "table"):
            raise InvalidInput(f"unknown learner kind {self.kind!r}")
        if self.kind == "knn" and self.k < 1:
            raise InvalidInput("K must be >= 1")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "LearnerSpec":
        """``halfspace``, ``table`` or ``knn:K``."""
        name, _, arg = text.partition(":")
        if name == "knn":
            try:
                return cls("knn", int(arg or 1), seed)
            except ValueError:
                raise InvalidInput(f"bad K in {text!r}") from None
        if arg:
            raise InvalidInput(f"learner {name!r} takes no parameter")
        return cls(name, 1, seed)

    def describe(self) -> str:
        return f"knn:{self.k}" if self.kind == "knn" else self.kind

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerSpec":
        return cls(d["kind"], int(d.get("k", 1)), int(d.get("seed", 0)))


class Hypothesis:
    """Trained predictor; subclasses implement ``predict_batch`` and ``label_scores``."""

    n_labels: int

    def predict(self, x) -> int:
        return int(self.predict_batch(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])

    def predict_batch(self, X) -> np.ndarray:
        raise NotImplementedError

    def label_scores(self, x) -> np.ndarray:
        """Per-label preference at ``x``; higher is preferred (used to pick runner-up labels)."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class HalfspaceHypothesis(Hypothesis):
    """``x -> 1 if omega . x >= 0 else 0``."""

    def __init__(self, omega):
        omega = np.array(omega, dtype=np.float64).reshape(-1)
        omega.setflags(write=False)
        self.omega = omega
        self.n_labels = 2

    def predict_batch(self, X):
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.omega.size)
        return (X @ self.omega >= 0.0).astype(np.int64)

    def label_scores(self, x):
        s = float(np.dot(self.omega, np.asarray(x, dtype=np.float64)))
        return np.array([-s, s])

    def to_dict(self):
        return {"type": "halfspace", "omega": self.omega.tolist()}


class KNNHypothesis(Hypothesis):
    def __init__(self, X, y, k: int, n_labels: int):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        self.k = int(k)
        self.n_labels = int(n_labels)
        if self.X.shape[0] < self.k:
            raise InvalidInput(f"K-NN needs m >= K (m={self.X.shape[0]}, K={self.k})")

    def votes(self, x) -> np.ndarray:
        order = neighbor_order(self.X, x)[: self.k]
        return np.bincount(self.y[order], minlength=self.n_labels)

    def predict_batch(self, X):
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.X.shape[1])
        return np.array([int(np.argmax(self.votes(x))) for x in X], dtype=np.int64)

    def label_scores(self, x):
        return self.votes(x).astype(np.float64)

    def to_dict(self):
        return {"type": "knn", "k": self.k, "n_labels": self.n_labels,
                "X": self.X.tolist(), "y": self.y.tolist()}


class TableHypothesis(Hypothesis):
    """Majority label among exact copies of ``x`` in training; global majority otherwise."""

    def __init__(self, table: dict[bytes, np.ndarray], default_counts: np.ndarray, n_labels: int):
        self.table = table
        self.default_counts = np.asarray(default_counts, dtype=np.int64)
        self.n_labels = n_labels

    def _counts(self, x):
        return self.table.get(example_key(x, 0)[0], self.default_counts)

    def predict_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        X = X.reshape(X.shape[0], -1) if X.ndim > 1 else X.reshape(1, -1)
        return np.array([int(np.argmax(self._counts(x))) for x in X], dtype=np.int64)

    def label_scores(self, x):
        return self._counts(np.asarray(x, dtype=np.float64)).astype(np.float64)

    def to_dict(self):
        return {"type": "table", "n_labels": self.n_labels,
                "default": self.default_counts.tolist(),
                "rows": [[np.frombuffer(k, dtype=np.float64).tolist(), v.tolist()]
                         for k, v in self.table.items()]}


def hypothesis_from_dict(d: dict) -> Hypothesis:
    kind = d.get("type")
    if kind == "halfspace":
        return HalfspaceHypothesis(d["omega"])
    if kind == "knn":
        return KNNHypothesis(np.array(d["X"], dtype=np.float64).reshape(len(d["y"]), -1),
                             d["y"], d["k"], d["n_labels"])
    if kind == "table":
        table = {example_key(np.array(x), 0)[0]: np.array(c, dtype=np.int64)
                 for x, c in d["rows"]}
        return TableHypothesis(table, np.array(d["default"]), d["n_labels"])
    raise InvalidInput(f"unknown hypothesis type {kind!r}")


def neighbor_order(X: np.ndarray, x) -> np.ndarray:
    """Training positions sorted by squared distance to ``x``; ties keep dataset order."""
    diff = np.asarray(X, dtype=np.float64) - np.asarray(x, dtype=np.float64).reshape(1, -1)
    return np.argsort(np.einsum("ij,ij->i", diff, diff), kind="stable")


def train(spec: LearnerSpec, S: Dataset) -> Hypothesis:
    if S.m == 0:
        raise InvalidInput("cannot train on an empty dataset")
    if spec.kind == "knn":
        return KNNHypothesis(S.X, S.y, spec.k, S.n_labels)
    if spec.kind == "table":
        return _train_table(S)
    if S.n_labels > 2 or (S.y.size and S.y.max() > 1):
        raise InvalidInput("halfspace ERM needs binary labels {0, 1}")
    return HalfspaceHypothesis(halfspace_erm(S.X, S.y, spec.seed))


def _train_table(S: Dataset) -> TableHypothesis:
    table: dict[bytes, np.ndarray] = {}
    for i in range(S.m):
        k = example_key(S.X[i], 0)[0]
        if k not in table:
            table[k] = np.zeros(S.n_labels, dtype=np.int64)
        table[k][S.y[i]] += 1
    default = np.bincount(S.y, minlength=S.n_labels)
    return TableHypothesis(table, default, S.n_labels)


def empirical_risk(h: Hypothesis, S: Dataset) -> float:
    if S.m == 0:
        raise InvalidInput("empirical risk of an empty dataset is undefined")
    return float(np.mean(h.predict_batch(S.X) != S.y))


# ---------------------------------------------------------------------------
# Halfspace ERM


def halfspace_errors(omega, X, y) -> int:
    """Training mistakes of ``Sign(omega . x)`` with Sign(0) -> label 1."""
    return int(np.count_nonzero((X @ omega >= 0.0) != (y == 1)))


def halfspace_erm(X, y, seed: int = 0) -> np.ndarray:
    """Unit normal of a homogeneous halfspace with minimum training error.

    Exact for d <= 3 (over directions where no training point lies exactly on
    the boundary); for d > 3 exact on separable data via a linear program and
    best-effort otherwise.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    m, d = X.shape
    Z = np.where(y == 1, 1.0, -1.0)[:, None] * X
    if d == 1:
        plus, minus = np.ones(1), -np.ones(1)
        return plus if halfspace_errors(plus, X, y) <= halfspace_errors(minus, X, y) else minus
    norms = np.linalg.norm(Z, axis=1)
    live = norms > 0
    if not live.any():
        return np.eye(d)[0]
    mean = Z[live].sum(axis=0)
    start = mean / np.linalg.norm(mean) if np.linalg.norm(mean) > 0 else np.eye(d)[0]
    if halfspace_errors(start, X, y) == 0:
        return start
    if d == 2:
        return _erm_circle(X, y, Z, start)
    if d == 3:
        return _erm_great_circles(X, y, Z, norms, start)
    return _erm_high_dim(X, y, Z, start, seed)


def _arc_endpoints(A, B):
    """Sorted start/end angles of the arcs where A cos(phi) + B sin(phi) > 0."""
    psi = np.arctan2(B, A)
    starts = np.mod(psi - np.pi / 2, 2 * np.pi)
    ends = np.mod(psi + np.pi / 2, 2 * np.pi)
    return starts, ends


def _erm_circle(X, y, Z, start) -> np.ndarray:
    live = np.linalg.norm(Z, axis=1) > 0
    starts, ends = _arc_endpoints(Z[live, 0], Z[live, 1])
    wrap = np.array([np.count_nonzero(starts > ends)])
    _, phis = _kernels.circle_sweep_block(np.sort(starts)[None, :], np.sort(ends)[None, :],
                                          wrap, SWEEP_MIN_WIDTH)
    omega = np.array([np.cos(phis[0]), np.sin(phis[0])])
    if halfspace_errors(omega, X, y) <= halfspace_errors(start, X, y):
        return omega
    return start


def _circle_bases(Zhat):
    """Orthonormal (u, v) spanning the plane orthogonal to each row of ``Zhat``."""
    n, d = Zhat.shape
    axis = np.argmin(np.abs(Zhat), axis=1)
    E = np.zeros_like(Zhat)
    E[np.arange(n), axis] = 1.0
    U = E - np.sum(E * Zhat, axis=1, keepdims=True) * Zhat
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    V = np.cross(Zhat, U)
    return U, V


def _nudge(omega_arc, zhat, Z):
    """Push a point of the great circle z^perp towards z without crossing other boundaries."""
    p = Z @ omega_arc
    q = Z @ zhat
    # only correct points that would turn wrong limit the step; points lying on
    # the circle itself (|p| at rounding level) are settled by the step direction
    on_circle = np.abs(p) <= PARALLEL_TOL * np.linalg.norm(Z, axis=1)
    crossing = (p > 0) & (q < 0) & ~on_circle
    eta = 1.0
    if crossing.any():
        eta = min(1.0, float(np.min(np.abs(p[crossing]) / np.abs(q[crossing]))))
    w = omega_arc + 0.5 * eta * zhat
    return w / np.linalg.norm(w)


def _block_bounds(n, first=32, block=256):
    bounds, lo = [], 0
    size = first
    while lo < n:
        bounds.append((lo, min(n, lo + size)))
        lo += size
        size = block
    return bounds


def _erm_great_circles(X, y, Z, norms, start) -> np.ndarray:
    """Sweep the great circle orthogonal to every training point.

    An optimal open cone of directions has a facet on some point's
    orthogonal plane; sweeping that circle finds an arc achieving the
    optimum, and a small step off the circle realizes it.  Circles of points
    nearly orthogonal to the mean direction are tried first so realizable
    samples usually stop after the first small block.
    """
    m = Z.shape[0]
    live = np.flatnonzero(norms > 0)
    Zl = Z[live]
    zl_norms = norms[live]
    Zhat = Zl / zl_norms[:, None]
    const_zero = int(np.count_nonzero((norms == 0) & (y == 1)))
    order = np.argsort(np.abs(Zhat @ start), kind="stable")
    best_w, best_err = start, halfspace_errors(start, X, y)
    for lo, hi in _block_bounds(order.size):
        rows = order[lo:hi]
        U, V = _circle_bases(Zhat[rows])
        A = U @ Zl.T
        B = V @ Zl.T
        parallel = np.hypot(A, B) < PARALLEL_TOL * zl_norms[None, :]
        const = np.count_nonzero(parallel & ((Zhat[rows] @ Zl.T) > 0), axis=1)
        starts, ends = _arc_endpoints(A, B)
        starts[parallel] = 0.0
        ends[parallel] = 0.0
        wrap = np.count_nonzero(starts > ends, axis=1)
        counts, phis = _kernels.circle_sweep_block(np.sort(starts, axis=1), np.sort(ends, axis=1),
                                                   wrap, SWEEP_MIN_WIDTH)
        total = counts + const + const_zero
        for r in np.argsort(-total, kind="stable"):
            if m - total[r] >= best_err:
                break
            w_arc = np.cos(phis[r]) * U[r] + np.sin(phis[r]) * V[r]
            w = _nudge(w_arc, Zhat[rows[r]], Z)
            err = halfspace_errors(w, X, y)
            if err < best_err:
                best_err, best_w = err, w
                if err == 0:
                    return best_w
    return best_w


def _hinge_direction(Z):
    """Minimizer of the total hinge slack ``sum max(0, 1 - z . w)`` as a linear program.

    On separable data the optimal slack is 0 and the solution separates
    every row; otherwise it is a good starting point for the pocket search.
    """
    m, d = Z.shape
    # variables: w (free, d), xi (>= 0, m); minimize sum xi s.t. z_i . w + xi_i >= 1
    c = np.concatenate([np.zeros(d), np.ones(m)])
    A_ub = sparse.hstack([sparse.csr_matrix(-Z), -sparse.identity(m, format="csr")], format="csr")
    res = linprog(c, A_ub=A_ub, b_ub=-np.ones(m), bounds=[(None, None)] * d + [(0, None)] * m,
                  method="highs")
    if res.status != 0:
        return None, np.full(m, np.inf)
    w = res.x[:d]
    norm = np.linalg.norm(w)
    return (w / norm if norm > 0 else None), res.x[d:]


def _peel_outliers(X, y, Z, live, best_w, best_err):
    """Re-solve the hinge LP after dropping the worst violator, until the rest separate.

    Each round removes the row with the largest slack; the normals found
    along the way are scored on the full sample and the best is kept.
    """
    active = np.flatnonzero(live)
    for _ in range(min(best_err, PEEL_ROUNDS)):
        w, slack = _hinge_direction(Z[active])
        if w is not None:
            err = halfspace_errors(w, X, y)
            if err < best_err:
                best_w, best_err = w, err
        if best_err == 0 or not np.all(np.isfinite(slack)) or slack.max() <= 1e-9:
            break
        active = np.delete(active, int(np.argmax(slack)))
    return best_w, best_err


def _erm_high_dim(X, y, Z, start, seed) -> np.ndarray:
    """Best-effort ERM for d > 3.

    A warm perceptron pass settles easy separable samples; a hinge-loss
    linear program settles the remaining separable ones exactly.  Otherwise
    the LP is re-solved while peeling off the worst violators, and a pocket
    perceptron with restarts polishes the best normal found.
    """
    m, d = Z.shape
    in_order = np.tile(np.arange(m, dtype=np.int64), (PERCEPTRON_WARM_EPOCHS, 1))
    w, err = _kernels.pocket_epochs(Z, start, in_order)
    if err == 0 and np.any(w) and halfspace_errors(w / np.linalg.norm(w), X, y) == 0:
        return w / np.linalg.norm(w)
    live = np.linalg.norm(Z, axis=1) > 0
    best_w, best_err = start, halfspace_errors(start, X, y)
    best_w, best_err = _peel_outliers(X, y, Z, live, best_w, best_err)
    if best_err == 0:
        return best_w
    rng = rng_for(seed, "pocket-restarts")
    base_order = np.tile(np.arange(m, dtype=np.int64), (POCKET_EPOCHS, 1))
    for restart in range(POCKET_RESTARTS):
        w0 = best_w if restart == 0 else rng.standard_normal(d)
        w, _ = _kernels.pocket_epochs(Z, w0, rng.permuted(base_order, axis=1))
        if not np.any(w):
            continue
        w = w / np.linalg.norm(w)
        err = halfspace_errors(w, X, y)
        if err < best_err:
            best_err, best_w = err, w
            if err == 0:
                break
    return best_w
