import sys

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def mnist_idx(tmp_path_factory):
    """IDX image/label files written from the 5000-digit MNIST sample shipped with mlxtend."""
    mlxtend_data = pytest.importorskip("mlxtend.data")
    from poisoncert.data import write_idx

    X, y = mlxtend_data.mnist_data()
    root = tmp_path_factory.mktemp("mnist")
    images, labels = root / "images-idx3-ubyte", root / "labels-idx1-ubyte"
    write_idx(np.asarray(X).reshape(-1, 28, 28), np.asarray(y), images, labels)
    return images, labels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
