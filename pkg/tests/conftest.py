import numpy as np
import pytest

from soliton_sensornet.fock import StateVector, basis_new
from soliton_sensornet.hamiltonian import TmsjjParams, build_hamiltonian, ground_state

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_state(rng, N) -> StateVector:
    basis = basis_new(N)
    a = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    return StateVector(basis, a / np.linalg.norm(a))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ground_n20_l35():
    return ground_state(build_hamiltonian(TmsjjParams(20, 3.5))).state


@pytest.fixture(scope="session")
def ground_n20_l0():
    return ground_state(build_hamiltonian(TmsjjParams(20, 0.0))).state
