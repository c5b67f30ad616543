import numpy as np
import pytest

from tensorid.multilinear import derive_rng

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'} [{criterion}] {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return derive_rng(12345)


def fd_jacobian(f, u, eps=1e-6):
    """Central differences of a holomorphic map along each complex coordinate."""
    u = np.asarray(u, dtype=complex)
    cols = []
    for i in range(u.size):
        e = np.zeros_like(u)
        e[i] = eps
        cols.append((f(u + e) - f(u - e)) / (2 * eps))
    return np.stack(cols, axis=-1)
