import numpy as np
import pytest

from ddsym.model import HamiltonianSpec, build_hamiltonian

# pass/fail lines collected by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_hermitian(rng, dim, scale=1.0):
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (A + A.conj().T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_bath():
    spec = HamiltonianSpec.random(3, scale_b=1.0, scale_d=0.5, seed=7, epsilon=0.03)
    return build_hamiltonian(spec)
