import numpy as np
import pytest

from rdbn import kernels
from rdbn.distributions import rng_stream
from rdbn.graph import DynamicNetwork, TrainingView
from rdbn.model import Hyperparams, forward_simulate


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    previous = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_problem(seed=0, N=8, T=3, K=2, L=2, directed=True, M=2.0, holdout=None, assortative=False):
    """Simulated network, its training view and hyperparameters for quick sampler tests."""
    hp = Hyperparams(K=K, L=L, iterations=4, burn_in=2, seed=seed)
    Lam = np.where(np.eye(K, dtype=bool), 5.0, 0.01) if assortative else None
    net, truth = forward_simulate(hp, N, T, rng_stream(seed, 99), directed=directed, Lambda=Lam, M=M)
    if holdout is None:
        return hp, net, TrainingView.from_network(net), truth
    from rdbn.graph import split_holdout

    view, mask = split_holdout(net, holdout, rng_stream(seed, 98))
    return hp, net, view, truth, mask


@pytest.fixture
def small_problem_factory():
    return small_problem


def random_network(N, T, n_edges, seed=0, directed=True):
    r = np.random.default_rng(seed)
    rows = []
    for t in range(T):
        k = r.choice(N * (N - 1), n_edges // T, replace=False)
        i = k // (N - 1)
        j = k % (N - 1)
        j = j + (j >= i)
        rows.append(np.column_stack([np.full(k.size, t), i, j]))
    return DynamicNetwork(N, T, np.concatenate(rows), directed)


_ACCEPTANCE = pytest.StashKey()


@pytest.fixture
def verdict(request):
    """Record and print one pass/fail line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, title, ok, detail):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
