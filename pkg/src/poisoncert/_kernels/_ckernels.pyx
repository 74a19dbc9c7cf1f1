# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``; results are bit-identical."""

import numpy as np
cimport numpy as cnp
from libc.math cimport M_PI

cnp.import_array()

cdef double TWO_PI = 2.0 * M_PI


def circle_sweep_block(starts, ends, wrap, double min_width):
    cdef double[:, ::1] S = np.ascontiguousarray(starts, dtype=np.float64)
    cdef double[:, ::1] E = np.ascontiguousarray(ends, dtype=np.float64)
    cdef cnp.int64_t[::1] W = np.ascontiguousarray(wrap, dtype=np.int64)
    cdef Py_ssize_t n = S.shape[0], r = S.shape[1]
    counts_arr = np.asarray(W, dtype=np.int64).copy()
    phis_arr = np.zeros(n, dtype=np.float64)
    if r == 0:
        return counts_arr, phis_arr
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef double[::1] phis = phis_arr
    cdef Py_ssize_t row, si, ei
    cdef long cover, best
    cdef double first, last, cur, nxt, mid, best_phi
    for row in range(n):
        first = S[row, 0] if S[row, 0] <= E[row, 0] else E[row, 0]
        last = S[row, r - 1] if S[row, r - 1] > E[row, r - 1] else E[row, r - 1]
        cover = W[row]
        best = -1
        best_phi = 0.0
        if first + TWO_PI - last >= min_width:
            best = cover
            mid = (last + first + TWO_PI) * 0.5
            best_phi = mid - TWO_PI if mid >= TWO_PI else mid
        si = 0
        ei = 0
        while si < r or ei < r:
            # consume every event at the current angle before scoring the gap
            if ei >= r or (si < r and S[row, si] <= E[row, ei]):
                cur = S[row, si]
            else:
                cur = E[row, ei]
            while si < r and S[row, si] == cur:
                cover += 1
                si += 1
            while ei < r and E[row, ei] == cur:
                cover -= 1
                ei += 1
            if si >= r and ei >= r:
                break
            if ei >= r or (si < r and S[row, si] <= E[row, ei]):
                nxt = S[row, si]
            else:
                nxt = E[row, ei]
            if nxt - cur >= min_width and cover > best:
                best = cover
                best_phi = (cur + nxt) * 0.5
        counts[row] = best
        phis[row] = best_phi
    return counts_arr, phis_arr


def pocket_epochs(Z, w0, orders):
    cdef double[:, ::1] Zv = np.ascontiguousarray(Z, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] O = np.ascontiguousarray(orders, dtype=np.int64).reshape(
        -1, Zv.shape[0]) if len(orders) else np.zeros((0, Zv.shape[0]), dtype=np.int64)
    cdef Py_ssize_t m = Zv.shape[0], d = Zv.shape[1]
    w_arr = np.array(w0, dtype=np.float64)
    best_arr = w_arr.copy()
    cdef double[::1] w = w_arr
    cdef double[::1] best_w = best_arr
    cdef Py_ssize_t e, t, i, k
    cdef double dot
    cdef long err, best_err
    best_err = _count_nonpositive(Zv, w)
    for e in range(O.shape[0]):
        if best_err == 0:
            break
        for t in range(m):
            i = O[e, t]
            dot = 0.0
            for k in range(d):
                dot += Zv[i, k] * w[k]
            if dot <= 0.0:
                for k in range(d):
                    w[k] += Zv[i, k]
        err = _count_nonpositive(Zv, w)
        if err < best_err:
            best_err = err
            for k in range(d):
                best_w[k] = w[k]
    return best_arr, int(best_err)


cdef long _count_nonpositive(double[:, ::1] Zv, double[::1] w):
    cdef Py_ssize_t i, k
    cdef long count = 0
    cdef double dot
    for i in range(Zv.shape[0]):
        dot = 0.0
        for k in range(Zv.shape[1]):
            dot += Zv[i, k] * w[k]
        if dot <= 0.0:
            count += 1
    return count


cdef inline bint _beats(long count_other, long other_label, long count_y, long y):
    return count_other > count_y or (count_other == count_y and other_label < y)


def knn_add_scan(labels, long K, long y, long n_labels):
    cdef cnp.int64_t[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = np.bincount(np.asarray(lab)[:K], minlength=n_labels).astype(np.int64)
    cdef long a, j, cy, best_label = 0
    for j in range(n_labels):
        if counts[j] > counts[best_label]:
            best_label = j
    if best_label != y:
        return 0
    for a in range(1, K + 1):
        counts[lab[K - a]] -= 1
        cy = counts[y]
        for j in range(n_labels):
            if j != y and _beats(counts[j] + a, j, cy, y):
                return a
    return K


def knn_remove_scan(labels, long K, long y, long n_labels):
    cdef cnp.int64_t[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t m = lab.shape[0], p, i
    cdef cnp.int64_t[::1] counts = np.zeros(n_labels, dtype=np.int64)
    cdef long j, kept_y, kept_j, nony
    for i in range(K - 1):
        counts[lab[i]] += 1
    for p in range(K - 1, m):
        counts[lab[p]] += 1
        nony = p + 1 - counts[y]
        kept_y = K - (K if nony > K else nony)
        for j in range(n_labels):
            if j == y:
                continue
            kept_j = counts[j] if counts[j] < K else K
            if _beats(kept_j, j, kept_y, y):
                return p + 1 - K
    return -1
