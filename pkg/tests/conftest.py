import os
from pathlib import Path

import numpy as np
import pytest

MNIST_CANDIDATES = [
    os.environ.get("HQNN_MNIST_DIR", ""),
    str(Path(__file__).resolve().parents[1] / "data" / "mnist"),
    str(Path.home() / "data" / "mnist"),
]


def _find_mnist():
    for cand in MNIST_CANDIDATES:
        if cand and any(Path(cand).glob("train-images*")):
            return cand
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def mnist_dir():
    d = _find_mnist()
    if d is None:
        pytest.skip("MNIST files not found; set HQNN_MNIST_DIR")
    return d


@pytest.fixture(scope="session")
def mnist_records(mnist_dir):
    from hqnn.experiment import load_data

    return load_data(mnist_dir)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
