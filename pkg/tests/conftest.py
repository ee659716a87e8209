import numpy as np
import pytest

from tgl.graph import GraphSnapshot


def random_adjacency(n, p=0.5, seed=0, connected=False):
    rng = np.random.default_rng(seed)
    A = np.triu((rng.random((n, n)) < p).astype(float), 1)
    if connected:
        for i in range(n - 1):
            A[i, i + 1] = 1.0
    return A + A.T


def snapshot_from_adjacency(A, t=0.0, x=None, w=None):
    n = A.shape[0]
    iu, ju = np.nonzero(np.triu(A, 1))
    return GraphSnapshot(t=t, nodes=list(range(n)), edges=list(zip(iu.tolist(), ju.tolist())), x=x, w=w)


def permutation(n, rng):
    return np.eye(n)[rng.permutation(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion; fails the test on a miss."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
        lines.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
