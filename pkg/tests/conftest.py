import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_state(rng, n):
    from qsmlab.qstate import StateVector

    z = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return StateVector(n, z / np.linalg.norm(z))


def random_density(rng, n, rank=None):
    from qsmlab.qstate import DensityMatrix

    N = 2**n
    rank = N if rank is None else rank
    A = rng.normal(size=(N, rank)) + 1j * rng.normal(size=(N, rank))
    rho = A @ A.conj().T
    return DensityMatrix(n, rho / np.trace(rho).real)


# -- acceptance report ------------------------------------------------------------

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance():
    """``record(label, ok, detail)`` appends a PASS/FAIL line to the session report."""

    def record(label, ok, detail=""):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
