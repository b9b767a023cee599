import numpy as np
import pytest

from lotus.linalg import RngState, qr_orthonormalize


def decaying_matrix(m, n, seed, decay=0.8):
    """``U diag(decay**i) V^T`` with seeded orthonormal factors."""
    rng = RngState(seed)
    k = min(m, n)
    u = qr_orthonormalize(rng.derive(0).normal((m, k)))
    v = qr_orthonormalize(rng.derive(1).normal((n, k)))
    return (u * decay ** np.arange(k)) @ v.T


@pytest.fixture
def nprng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion and assert it."""

    def record(label, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
