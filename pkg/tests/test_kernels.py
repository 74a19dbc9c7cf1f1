"""The compiled kernels must agree exactly with the numpy reference versions."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from poisoncert import _kernels

py = _kernels.python_backend
cy = _kernels.compiled_backend
pytestmark = pytest.mark.skipif(cy is None, reason="compiled extension not built")

grid = st.integers(0, 24).map(lambda k: k * 0.25)  # coarse grid forces coincident events


@st.composite
def sweep_blocks(draw):
    n = draw(st.integers(1, 4))
    r = draw(st.integers(0, 6))
    starts = np.sort(np.array([[draw(grid) for _ in range(r)] for _ in range(n)]).reshape(n, r), axis=1)
    ends = np.sort(np.array([[draw(grid) for _ in range(r)] for _ in range(n)]).reshape(n, r), axis=1)
    wrap = np.array([draw(st.integers(0, 3)) for _ in range(n)])
    return starts, ends, wrap


@given(sweep_blocks(), st.sampled_from([0.1, 0.3, 1.0]))
def test_circle_sweep_agrees(block, width):
    a = py.circle_sweep_block(*block, width)
    b = cy.circle_sweep_block(*block, width)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@given(st.integers(1, 12), st.integers(1, 4), st.integers(0, 6), st.integers(0, 2**31))
def test_pocket_epochs_agree(m, d, epochs, seed):
    rng = np.random.default_rng(seed)
    Z = rng.integers(-3, 4, size=(m, d)).astype(float)
    w0 = rng.integers(-2, 3, size=d).astype(float)
    orders = np.array([rng.permutation(m) for _ in range(epochs)]).reshape(epochs, m)
    wa, ea = py.pocket_epochs(Z, w0, orders)
    wb, eb = cy.pocket_epochs(Z, w0, orders)
    assert ea == eb and np.array_equal(wa, wb)


label_runs = st.tuples(st.integers(2, 4), st.integers(1, 7)).flatmap(
    lambda t: st.tuples(st.just(t[0]), st.just(t[1]),
                        st.lists(st.integers(0, t[0] - 1), min_size=t[1], max_size=t[1] + 10),
                        st.integers(0, t[0] - 1)))


@given(label_runs)
def test_knn_scans_agree(case):
    L, K, labels, y = case
    labels = np.array(labels)
    assert py.knn_add_scan(labels, K, y, L) == cy.knn_add_scan(labels, K, y, L)
    assert py.knn_remove_scan(labels, K, y, L) == cy.knn_remove_scan(labels, K, y, L)


def test_backend_name():
    assert _kernels.BACKEND in ("cython", "python")


def test_pure_python_fallback_selected_by_environment():
    import os
    import subprocess
    import sys
    code = ("from poisoncert import _kernels\n"
            "from poisoncert.data import gen_two_circles\n"
            "from poisoncert.learners import halfspace_erm\n"
            "S = gen_two_circles(50, 0)\n"
            "print(_kernels.BACKEND, repr(halfspace_erm(S.X, S.y).tolist()))\n")
    env = dict(os.environ, POISONCERT_PURE_PYTHON="1")
    pure = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                          check=True).stdout.split(" ", 1)
    env.pop("POISONCERT_PURE_PYTHON")
    fast = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                          check=True).stdout.split(" ", 1)
    assert pure[0] == "python" and fast[0] == "cython"
    assert pure[1] == fast[1]
