import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from poisoncert.core import Dataset, FormatError, InvalidInput
from poisoncert.data import (dataset_from_csv, dataset_to_csv, gen_sphere_halfspace, gen_two_circles,
                             load_dataset, load_mnist_idx, save_dataset, write_idx)


def tiny_idx(tmp_path, n=5):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, size=(n, 4, 3), dtype=np.uint8)
    labs = rng.integers(0, 10, size=n, dtype=np.uint8)
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(imgs, labs, ip, lp)
    return imgs, labs, ip, lp


def test_idx_round_trip(tmp_path):
    imgs, labs, ip, lp = tiny_idx(tmp_path)
    S = load_mnist_idx(ip, lp)
    assert S.m == 5 and S.d == 12 and S.n_labels == 10
    assert np.array_equal(S.y, labs)
    assert S.X.min() >= 0 and S.X.max() <= 1
    assert np.allclose(S.X * 255, imgs.reshape(5, 12))
    raw = load_mnist_idx(ip, lp, raw_bytes=True)
    assert np.array_equal(raw.X, imgs.reshape(5, 12).astype(float))
    assert load_mnist_idx(ip, lp, limit=2).m == 2


def test_idx_gzip(tmp_path):
    import gzip
    imgs, labs, ip, lp = tiny_idx(tmp_path)
    gz = tmp_path / "img.idx.gz"
    gz.write_bytes(gzip.compress(ip.read_bytes()))
    assert np.array_equal(load_mnist_idx(gz, lp).X, load_mnist_idx(ip, lp).X)


def test_idx_limit_too_large_warns(tmp_path):
    *_, ip, lp = tiny_idx(tmp_path)
    with pytest.warns(UserWarning):
        assert load_mnist_idx(ip, lp, limit=50).m == 5


def test_idx_bad_magic(tmp_path):
    *_, ip, lp = tiny_idx(tmp_path)
    ip.write_bytes(struct.pack(">I", 0x0801) + ip.read_bytes()[4:])
    with pytest.raises(FormatError, match="offset 0"):
        load_mnist_idx(ip, lp)


def test_idx_truncated(tmp_path):
    *_, ip, lp = tiny_idx(tmp_path)
    ip.write_bytes(ip.read_bytes()[:-7])
    with pytest.raises(FormatError, match="truncated.*offset"):
        load_mnist_idx(ip, lp)
    ip.write_bytes(ip.read_bytes()[:10])
    with pytest.raises(FormatError, match="truncated header"):
        load_mnist_idx(ip, lp)


def test_idx_count_mismatch(tmp_path):
    imgs, labs, ip, lp = tiny_idx(tmp_path)
    write_idx(imgs, labs[:4], tmp_path / "x", lp)
    with pytest.raises(FormatError, match="offset 4"):
        load_mnist_idx(ip, lp)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(st.integers(1, 4).flatmap(lambda d: st.lists(
    st.tuples(st.lists(finite, min_size=d, max_size=d), st.integers(0, 5)), max_size=8)))
def test_csv_round_trip(rows):
    if not rows:
        return
    X = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    S = Dataset(X, y, n_labels=6)
    T = dataset_from_csv(dataset_to_csv(S), n_labels=6)
    assert np.array_equal(T.X, S.X) and np.array_equal(T.y, S.y)


def test_csv_header_only_is_empty():
    S = dataset_from_csv("x0,x1,y\n", n_labels=2)
    assert S.m == 0 and S.d == 2


def test_csv_errors_cite_line_numbers():
    with pytest.raises(FormatError, match="line 1"):
        dataset_from_csv("a,b\n1,0\n")
    with pytest.raises(FormatError, match="line 3"):
        dataset_from_csv("x0,x1,y\n1,2,0\n1,2\n")
    with pytest.raises(FormatError, match="line 2"):
        dataset_from_csv("x0,y\nfoo,1\n")
    with pytest.raises(FormatError, match="line 2"):
        dataset_from_csv("x0,y\nnan,1\n")
    with pytest.raises(FormatError, match="line 1"):
        dataset_from_csv("")


def test_dataset_files(tmp_path):
    S = gen_two_circles(7, 1)
    save_dataset(S, tmp_path / "s.csv")
    assert load_dataset(tmp_path / "s.csv").equals(S)
    with pytest.raises(InvalidInput):
        load_dataset(tmp_path / "missing.csv")


def test_two_circles_generator():
    S = gen_two_circles(500, 3)
    assert np.allclose(np.hypot(S.X[:, 0], S.X[:, 1]), 1)
    assert np.array_equal(S.y, (S.X[:, 2] > 0).astype(int))
    assert 0.4 < S.y.mean() < 0.6
    assert gen_two_circles(20, 9).equals(gen_two_circles(20, 9))
    with pytest.raises(InvalidInput):
        gen_two_circles(0, 0)


def test_sphere_generator():
    omega = np.array([0.6, 0.8, 0.0])
    S = gen_sphere_halfspace(300, 3, omega, 2)
    assert np.allclose(np.linalg.norm(S.X, axis=1), 1)
    assert np.array_equal(S.y, (S.X @ omega >= 0).astype(int))
    with pytest.raises(InvalidInput):
        gen_sphere_halfspace(5, 3, [1.0, 0.0], 0)
