import numpy as np
import pytest

from gsqc.graph import Graph, eigendecompose, random_geometric_graph
from gsqc.signal_model import SignalModel, db_to_power, inverse_eigenvalue_variances


def two_node_graph():
    return Graph(np.array([[0.0, 1.0], [1.0, 0.0]]))


def ring_graph(n):
    w = np.zeros((n, n))
    for i in range(n):
        w[i, (i + 1) % n] = w[(i + 1) % n, i] = 1.0
    return Graph(w)


def geometric_model(n=30, radius=0.4, seed=0, k=6, noise_db=-20.0, prior=None):
    sg = eigendecompose(random_geometric_graph(n, radius, seed))
    pv = inverse_eigenvalue_variances(sg, k) if prior is None else np.asarray(prior, dtype=float)
    return SignalModel(sg, k, pv, db_to_power(noise_db))


@pytest.fixture
def small_model():
    return geometric_model()


@pytest.fixture(scope="session")
def bench_model():
    """N=100, K=20, -30 dB on the benchmark geometric graph."""
    sg = eigendecompose(random_geometric_graph(100, 0.2, 0))
    return SignalModel(sg, 20, inverse_eigenvalue_variances(sg, 20), db_to_power(-30.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
