import zlib

import numpy as np
import pytest

from stereorisk import DisparityPmf, Kernel


def random_pmf(rng, n_max=64, n_min=1, floor=0.0):
    """Sorted hypotheses with spacing in [0.25, 1.5] and Dirichlet probabilities."""
    n = int(rng.integers(n_min, n_max + 1))
    d = rng.uniform(-20, 20) + np.cumsum(rng.uniform(0.25, 1.5, n))
    p = rng.dirichlet(np.ones(n))
    if floor:
        p = floor + (1 - n * floor) * p
    return DisparityPmf(d, p)


def random_kernel(rng, variant="laplacian"):
    return Kernel(variant, float(rng.uniform(0.5, 3.0)))


@pytest.fixture
def rng(request):
    # stable per-test seed
    return np.random.default_rng(zlib.crc32(request.node.name.encode()))


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  [{criterion}] {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
