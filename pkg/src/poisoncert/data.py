"""Synthetic generators, MNIST IDX ingestion and dataset CSV persistence."""

from __future__ import annotations

import csv
import gzip
import io
import struct
import warnings
from pathlib import Path

import numpy as np

from .core import Dataset, FormatError, InvalidInput
from .geometry import uniform_sphere_sample

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def gen_two_circles(m: int, seed) -> Dataset:
    """Points on the unit circles at height z = +1 (label 1) and z = -1 (label 0).

    A fair coin picks the circle and the angle is uniform, so the halfspace
    with normal (0, 0, 1) labels everything correctly.
    """
    if m < 1:
        raise InvalidInput("m must be >= 1")
    rng = np.random.default_rng(seed)
    up = rng.random(m) < 0.5
    alpha = rng.uniform(0.0, 2 * np.pi, size=m)
    X = np.column_stack([np.cos(alpha), np.sin(alpha), np.where(up, 1.0, -1.0)])
    return Dataset(X, up.astype(np.int64), n_labels=2)


def sphere_labels(X, omega) -> np.ndarray:
    return (np.asarray(X) @ np.asarray(omega, dtype=np.float64) >= 0.0).astype(np.int64)


def gen_sphere_halfspace(m: int, d: int, omega_truth, seed) -> Dataset:
    """Uniform points on the unit sphere in R^d labeled by ``Sign(omega_truth . x)``."""
    if m < 1 or d < 2:
        raise InvalidInput("need m >= 1 and d >= 2")
    omega = np.asarray(omega_truth, dtype=np.float64).reshape(-1)
    if omega.size != d:
        raise InvalidInput("omega_truth has the wrong dimension")
    X = uniform_sphere_sample(d, m, seed)
    return Dataset(X, sphere_labels(X, omega), n_labels=2)


# ---------------------------------------------------------------------------
# IDX


def _open_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _idx_header(raw: bytes, magic: int, ndims: int, path) -> tuple[int, ...]:
    need = 4 + 4 * ndims
    if len(raw) < need:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes, need {need} at offset 0)")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise FormatError(f"{path}: bad magic 0x{got:08x} at offset 0, expected 0x{magic:08x}")
    return struct.unpack(">" + "I" * ndims, raw[4:need])


def load_mnist_idx(images_path, labels_path, limit: int | None = None,
                   raw_bytes: bool = False) -> Dataset:
    """First ``limit`` images (flattened, scaled to [0, 1] unless ``raw_bytes``) with labels."""
    img = _open_bytes(images_path)
    lab = _open_bytes(labels_path)
    n_img, rows, cols = _idx_header(img, IMAGES_MAGIC, 3, images_path)
    (n_lab,) = _idx_header(lab, LABELS_MAGIC, 1, labels_path)
    if n_img != n_lab:
        raise FormatError(f"image count {n_img} (offset 4 of {images_path}) != "
                          f"label count {n_lab} (offset 4 of {labels_path})")
    n = n_img
    if limit is not None:
        if limit < 0:
            raise InvalidInput("limit must be >= 0")
        if limit > n:
            warnings.warn(f"limit {limit} exceeds the {n} examples in the file; loading {n}")
        n = min(n, limit)
    px = rows * cols
    img_end = 16 + n * px
    if len(img) < img_end:
        raise FormatError(f"{images_path}: truncated pixel data at offset {len(img)}, "
                          f"need {img_end} bytes")
    if len(lab) < 8 + n:
        raise FormatError(f"{labels_path}: truncated label data at offset {len(lab)}, "
                          f"need {8 + n} bytes")
    pixels = np.frombuffer(img, dtype=np.uint8, count=n * px, offset=16).reshape(n, px)
    labels = np.frombuffer(lab, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    if labels.size and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise FormatError(f"{labels_path}: label {labels[bad]} at offset {8 + bad} outside 0-9")
    X = pixels.astype(np.float64) if raw_bytes else pixels.astype(np.float64) / 255.0
    return Dataset(X.reshape(n, px), labels, n_labels=10, d=px)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path):
    """Write uint8 images (n, rows, cols) and labels (n,) as uncompressed IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols)
                                  + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", LABELS_MAGIC, labels.size) + labels.tobytes())


# ---------------------------------------------------------------------------
# CSV


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dataset_to_csv(S: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(S.d)] + ["y"])
    for i in range(S.m):
        w.writerow([_fmt(v) for v in S.X[i]] + [int(S.y[i])])
    return buf.getvalue()


def dataset_from_csv(text: str, n_labels: int | None = None, source: str = "<csv>") -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatError(f"{source}: line 1: missing header")
    header = rows[0]
    d = len(header) - 1
    if d < 1 or header[-1] != "y" or header[:-1] != [f"x{i}" for i in range(d)]:
        raise FormatError(f"{source}: line 1: header must be x0,...,x{{d-1}},y")
    X = np.empty((len(rows) - 1, d))
    y = np.empty(len(rows) - 1, dtype=np.int64)
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != d + 1:
            raise FormatError(f"{source}: line {line}: expected {d + 1} fields, got {len(row)}")
        try:
            X[i] = [float(v) for v in row[:-1]]
            y[i] = int(row[-1])
        except ValueError as exc:
            raise FormatError(f"{source}: line {line}: {exc}") from None
        if not np.all(np.isfinite(X[i])) or y[i] < 0:
            raise FormatError(f"{source}: line {line}: non-finite feature or negative label")
    return Dataset(X, y, n_labels=n_labels, d=d)


def save_dataset(S: Dataset, path):
    Path(path).write_text(dataset_to_csv(S))


def load_dataset(path, n_labels: int | None = None) -> Dataset:
    p = Path(path)
    if not p.exists():
        raise InvalidInput(f"no such file: {path}")
    return dataset_from_csv(p.read_text(), n_labels=n_labels, source=str(path))


__all__ = ["gen_two_circles", "gen_sphere_halfspace", "sphere_labels", "load_mnist_idx", "write_idx",
           "dataset_to_csv", "dataset_from_csv", "save_dataset", "load_dataset"]
