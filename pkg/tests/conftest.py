import os
from pathlib import Path

import numpy as np
import pytest

from hypgan.data import find_mnist


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        out[i] = (fp - fm) / (2 * h)
    return out


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def mnist_path() -> Path | None:
    directory = Path(os.environ.get("HYPGAN_MNIST_DIR", "/root/data/mnist"))
    try:
        find_mnist(directory, "train")
        find_mnist(directory, "test")
    except (FileNotFoundError, OSError):
        return None
    return directory


@pytest.fixture(scope="session")
def mnist_dir():
    directory = mnist_path()
    if directory is None:
        pytest.skip("MNIST IDX files not found; set HYPGAN_MNIST_DIR")
    return directory


@pytest.fixture(scope="session")
def mnist_small(mnist_dir):
    from hypgan.data import load_mnist

    return load_mnist(mnist_dir, "train").subset(300)


@pytest.fixture(scope="session")
def quick_evaluator(mnist_dir):
    """A one-epoch evaluator: good enough to exercise the metric plumbing."""
    from hypgan.data import load_mnist
    from hypgan.evaluator import MnistEvaluator

    train = load_mnist(mnist_dir, "train").subset(3000)
    return MnistEvaluator(epochs=1).fit(train.images, train.labels)


# -- acceptance reporting --------------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, title: str, passed: bool, detail: str = "") -> None:
    line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
