import sys
from pathlib import Path

import hypothesis
import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "scripts"))

hypothesis.settings.register_profile(
    "default", max_examples=50, deadline=None,
    suppress_health_check=[hypothesis.HealthCheck.too_slow])
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def mnist_paths():
    """Desk-scale MNIST IDX files, fetched on first use."""
    from fetch_mnist import fetch

    return fetch(ROOT / "data" / "mnist")


@pytest.fixture(scope="session")
def mnist_train(mnist_paths):
    from sae.data import MNIST_ABC, apply_decomposition, load_idx

    ds = load_idx(mnist_paths["train-images-idx3-ubyte"],
                  mnist_paths["train-labels-idx1-ubyte"])
    return apply_decomposition(ds, MNIST_ABC)


@pytest.fixture(scope="session")
def mnist_test(mnist_paths):
    from sae.data import MNIST_ABC, apply_decomposition, load_idx

    ds = load_idx(mnist_paths["t10k-images-idx3-ubyte"],
                  mnist_paths["t10k-labels-idx1-ubyte"])
    return apply_decomposition(ds, MNIST_ABC)


# Acceptance criteria report one line each at the end of the run.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_criterion(name: str, passed: bool, detail: str = ""):
    ACCEPTANCE_RESULTS.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] {name}"
        if detail:
            line += f" — {detail}"
        terminalreporter.write_line(line)


def random_orthogonal(rng: np.random.Generator, m: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))
