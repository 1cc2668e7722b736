import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dysonsim.model import LindbladModel, NonHermitianModel, RateFunction
from dysonsim.pauli import SIGMA_MINUS, pauli_matrix

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

EXCITED = np.diag([1.0, 0.0]).astype(complex)
GROUND = np.diag([0.0, 1.0]).astype(complex)
PLUS = 0.5 * np.ones((2, 2), dtype=complex)
X, Y, Z = (pauli_matrix(w) for w in "XYZ")


@pytest.fixture
def amplitude_damping():
    return LindbladModel.build(np.zeros((2, 2)), [(SIGMA_MINUS, 0.1)])


@pytest.fixture
def two_qubit():
    H = 0.5 * pauli_matrix("ZI") + 0.5 * pauli_matrix("IZ") + 0.25 * pauli_matrix("XX") + 0.25 * pauli_matrix("YY")
    I2 = np.eye(2)
    return LindbladModel.build(H, [(np.kron(SIGMA_MINUS, I2), 0.1), (np.kron(I2, SIGMA_MINUS), 0.1)])


@pytest.fixture
def non_markovian():
    return LindbladModel.build(0.5 * Z, [(SIGMA_MINUS, RateFunction.sinusoid(0.2, 2.0))])


@pytest.fixture
def feshbach():
    return NonHermitianModel(X, np.diag([0.2, 0.0]))


def random_model(rng, d, N, gamma_max=0.5, sinusoid=False):
    from dysonsim.linalg import random_hermitian

    H = random_hermitian(d, rng)
    chans = []
    for i in range(N):
        L = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        L /= np.linalg.norm(L, 2)
        g = float(rng.uniform(0.05, gamma_max))
        rate = RateFunction.sinusoid(g, float(rng.uniform(0.5, 3.0)), float(rng.uniform(0, 1))) if sinusoid and i == 1 else g
        chans.append((L, rate))
    return LindbladModel.build(H, chans)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
