"""Reference implementations of the hot kernels in numpy / plain Python.

These are the fallback when the compiled extension is unavailable (or when
``POISONCERT_PURE_PYTHON`` is set) and the ground truth the extension is
tested against.  Every function here must return bit-identical results to its
counterpart in ``_ckernels.pyx``.
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def circle_sweep_block(starts, ends, wrap, min_width):
    """Best arc coverage for each row of sorted arc endpoints.

    ``starts`` and ``ends`` are (n, r) arrays sorted along each row; row i
    describes r half-circle arcs on a circle, ``wrap[i]`` of which cross angle 0.
    Returns, per row, the largest number of arcs covering a common open
    interval of width >= ``min_width`` and the midpoint angle of the first
    such interval (the interval crossing 0 first, then in angle order).
    """
    starts = np.asarray(starts, dtype=np.float64)
    ends = np.asarray(ends, dtype=np.float64)
    n, r = starts.shape
    counts = np.asarray(wrap, dtype=np.int64).copy()
    phis = np.zeros(n, dtype=np.float64)
    if r == 0:
        return counts, phis
    pos = np.concatenate([starts, ends], axis=1)
    delta = np.concatenate([np.ones((n, r), np.int64), -np.ones((n, r), np.int64)], axis=1)
    order = np.argsort(pos, axis=1, kind="stable")
    pos = np.take_along_axis(pos, order, axis=1)
    cover = np.cumsum(np.take_along_axis(delta, order, axis=1), axis=1) + counts[:, None]

    # wrap interval: after the last event, across 0, to the first event
    wrap_width = pos[:, 0] + TWO_PI - pos[:, -1]
    best = np.where(wrap_width >= min_width, counts, -1)
    mid = (pos[:, -1] + pos[:, 0] + TWO_PI) * 0.5
    phis = np.where(best >= 0, np.where(mid >= TWO_PI, mid - TWO_PI, mid), 0.0)

    widths = pos[:, 1:] - pos[:, :-1]
    inner = np.where(widths >= min_width, cover[:, :-1], -1)
    if inner.shape[1]:
        k = np.argmax(inner, axis=1)  # first maximal interval in angle order
        kbest = inner[np.arange(n), k]
        better = kbest > best
        rows = np.flatnonzero(better)
        phis[rows] = (pos[rows, k[rows]] + pos[rows, k[rows] + 1]) * 0.5
        best = np.where(better, kbest, best)
    return best.astype(np.int64), phis


def pocket_epochs(Z, w0, orders):
    """Perceptron passes over rows of ``Z`` in each given order, pocketing the best.

    After each epoch the number of rows with ``z . w <= 0`` is evaluated; the
    weight vector with the fewest such rows (first one on ties, starting with
    ``w0``) is returned together with that count.
    """
    Z = np.asarray(Z, dtype=np.float64)
    w = np.array(w0, dtype=np.float64)
    best_w = w.copy()
    best_err = int(np.count_nonzero(Z @ w <= 0.0))
    for order in orders:
        if best_err == 0:
            break
        for i in order:
            z = Z[i]
            if float(np.dot(z, w)) <= 0.0:
                w += z
        err = int(np.count_nonzero(Z @ w <= 0.0))
        if err < best_err:
            best_err = err
            best_w = w.copy()
    return best_w, best_err


def _beats(count_other, other_label, count_y, y):
    return count_other > count_y or (count_other == count_y and other_label < y)


def knn_add_scan(labels, K, y, n_labels):
    """Fewest label-``j`` points placed ahead of every neighbor that flip a K-NN vote.

    ``labels`` lists training labels in neighbor order.  Placing ``a`` copies
    of label j first leaves the first ``K - a`` original neighbors in the
    window.  Returns 0 if the clean prediction already differs from ``y``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels[:K], minlength=n_labels).astype(np.int64)
    if int(np.argmax(counts)) != y:
        return 0
    for a in range(1, K + 1):
        counts[labels[K - a]] -= 1
        cy = counts[y]
        for j in range(n_labels):
            if j != y and _beats(counts[j] + a, j, cy, y):
                return a
    return K  # unreachable: a = K fills the window with label j


def knn_remove_scan(labels, K, y, n_labels):
    """Fewest removals that flip a K-NN vote; -1 if no removal set does.

    Keeping the first ``p + 1`` neighbors and deleting ``p + 1 - K`` of them,
    the best an adversary can do is delete label-``y`` points first and keep
    every point of the challenger label.
    """
    labels = np.asarray(labels, dtype=np.int64)
    m = labels.shape[0]
    counts = np.bincount(labels[:K - 1], minlength=n_labels).astype(np.int64) if K > 1 \
        else np.zeros(n_labels, dtype=np.int64)
    for p in range(K - 1, m):
        counts[labels[p]] += 1
        kept_y = K - min(K, p + 1 - counts[y])
        for j in range(n_labels):
            if j != y and _beats(min(counts[j], K), j, kept_y, y):
                return p + 1 - K
    return -1
