import numpy as np
import pytest

from whiterec.ingest import InteractionMatrix


def pytest_runtest_logreport(report):
    """One visible PASS/FAIL line per acceptance criterion."""
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        status = "PASS" if report.passed else "FAIL"
        print(f"\n[acceptance] {status} {report.nodeid.split('::')[-1]}")


def random_interactions(rng, n_users, n_items, density=0.35) -> InteractionMatrix:
    """Random binary matrix with every row and column non-empty."""
    dense = (rng.random((n_users, n_items)) < density).astype(np.float64)
    for u in range(n_users):
        if dense[u].sum() == 0:
            dense[u, rng.integers(n_items)] = 1.0
    for j in range(n_items):
        if dense[:, j].sum() == 0:
            dense[rng.integers(n_users), j] = 1.0
    return InteractionMatrix.from_dense(dense)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
