import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dysonsim.errors import DimensionError, StiffnessError, ValidationError
from dysonsim.linalg import random_density_matrix, random_hermitian
from dysonsim.model import LindbladModel, NonHermitianModel, RateFunction
from dysonsim.oracle import (
    EigenPropagator,
    PropagatorCache,
    evolve_unitary,
    heisenberg,
    integrate_master,
    integrate_non_hermitian,
    observable_distance,
    oracle_trajectory,
    trace_distance,
)
from dysonsim.pauli import SIGMA_MINUS, pauli_matrix

import reference as ref
from conftest import EXCITED, GROUND, PLUS, random_model

X, Y, Z = (pauli_matrix(w) for w in "XYZ")

# exact <ZI> for the two-qubit exchange model (frozen from tests/reference.py)
TWO_QUBIT_ZI = [
    0.9202998008101004, 0.7860117797995554, 0.6065630684453467, 0.3937231614365624,
    0.1607679107140773, -0.07840794986956234, -0.3101728820701778, -0.5219814597992799,
]
NON_MARKOVIAN_X = [
    0.9629999461019203, 0.8576414775537314, 0.698470008778802, 0.5033679767582434,
    0.2881664623529977, 0.0640377017765627, -0.16179694069311112, -0.3831229628213474,
]
FESHBACH_Z = [
    -0.8815464026970798, -0.5689718909460996, -0.15357687464821673, 0.2580702634395464,
    0.5704156886808965, 0.7201352213200823, 0.6878213069674681, 0.4983256021643454,
]
FESHBACH_TRACE = [
    0.998017835429925, 0.9852762292702245, 0.954961083219299, 0.9055282888131071,
    0.8405362820627059, 0.7673069341735105, 0.6948382175274899, 0.6315261239078591,
]
DEPHASING_Z = [0.8815464026970798, 0.5689718909460998, -0.2580702634395464]
TIMES = np.linspace(0.25, 2.0, 8)


def test_propagator_cache():
    cache = PropagatorCache(random_hermitian(3, np.random.default_rng(0)))
    np.testing.assert_array_equal(cache(0.0), np.eye(3))
    U = cache(0.8)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(3), atol=1e-10)
    assert cache(0.8) is U


def test_evolve_unitary_examples():
    H = 0.5 * Z
    np.testing.assert_allclose(evolve_unitary(H, PLUS, 0.0), PLUS)
    minus = np.array([[0.5, -0.5], [-0.5, 0.5]])
    np.testing.assert_allclose(evolve_unitary(H, PLUS, np.pi), minus, atol=1e-14)
    for t in (0.3, 4.0):
        np.testing.assert_allclose(evolve_unitary(H, EXCITED, t), EXCITED, atol=1e-14)
    with pytest.raises(DimensionError):
        evolve_unitary(H, np.eye(4) / 4, 1.0)


@pytest.mark.parametrize("s", [0.0, 0.4, 2.5])
def test_heisenberg_precession(s):
    np.testing.assert_allclose(heisenberg(0.5 * Z, X, s), np.cos(s) * X - np.sin(s) * Y, atol=1e-14)
    np.testing.assert_allclose(heisenberg(0.5 * Z, np.eye(2), s), np.eye(2), atol=1e-14)


def test_eigen_propagator_matches_cache():
    H = random_hermitian(4, np.random.default_rng(1))
    prop = EigenPropagator(H)
    xi = random_hermitian(4, np.random.default_rng(2))
    times = np.array([0.0, 0.3, 1.7])
    batch = prop.heisenberg(xi, times)
    for k, s in enumerate(times):
        np.testing.assert_allclose(batch[k], heisenberg(H, xi, s), atol=1e-12)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_amplitude_damping_closed_form(amplitude_damping, t):
    rho = integrate_master(amplitude_damping, EXCITED, t)
    assert np.trace(Z @ rho).real == pytest.approx(2 * np.exp(-0.1 * t) - 1, abs=1e-6)


def test_unitary_limit():
    m = LindbladModel.build(0.7 * X + 0.2 * Z, [(SIGMA_MINUS, 0.0)])
    np.testing.assert_allclose(integrate_master(m, PLUS, 1.3), evolve_unitary(m.hamiltonian, PLUS, 1.3), atol=1e-8)


def test_rk4_fourth_order():
    m = LindbladModel.build(0.5 * X, [(SIGMA_MINUS, 1.0)])
    exact = ref.evolve(0.5 * X, [(SIGMA_MINUS, 1.0)], EXCITED, 2.0)
    errs = [np.max(np.abs(integrate_master(m, EXCITED, 2.0, steps) - exact)) for steps in (10, 20)]
    assert 10 < errs[0] / errs[1] < 22


def test_step_validation_and_stiffness():
    m = LindbladModel.build(np.zeros((2, 2)), [(SIGMA_MINUS, 50.0)])
    with pytest.raises(ValidationError):
        integrate_master(m, EXCITED, 1.0, 0)
    with pytest.raises(StiffnessError, match="smaller step"):
        integrate_master(m, EXCITED, 1.0, 2)


def test_two_qubit_reference(two_qubit):
    rho0 = np.kron(EXCITED, GROUND)
    ZI = np.kron(Z, np.eye(2))
    got = [np.trace(ZI @ r).real for r in oracle_trajectory(two_qubit, rho0, TIMES)]
    np.testing.assert_allclose(got, TWO_QUBIT_ZI, atol=1e-8)


def test_non_markovian_reference(non_markovian):
    got = [np.trace(X @ r).real for r in oracle_trajectory(non_markovian, PLUS, TIMES)]
    np.testing.assert_allclose(got, NON_MARKOVIAN_X, atol=1e-8)


def test_dephasing_reference():
    m = LindbladModel.build(0.5 * X, [(Z, 0.1)])
    got = [np.trace(Z @ r).real for r in oracle_trajectory(m, EXCITED, [0.5, 1.0, 2.0])]
    np.testing.assert_allclose(got, DEPHASING_Z, atol=1e-8)


def test_non_hermitian_reference(feshbach):
    traj = oracle_trajectory(feshbach, GROUND, TIMES)
    np.testing.assert_allclose([np.trace(Z @ r).real for r in traj], FESHBACH_Z, atol=1e-8)
    np.testing.assert_allclose([np.trace(r).real for r in traj], FESHBACH_TRACE, atol=1e-8)
    norms = [np.linalg.svd(r, compute_uv=False).sum() for r in [GROUND] + traj]
    assert np.all(np.diff(norms) <= 1e-12)


def test_non_hermitian_examples():
    rng = np.random.default_rng(3)
    rho = random_density_matrix(2, rng)
    np.testing.assert_allclose(
        integrate_non_hermitian(NonHermitianModel(X, np.zeros((2, 2))), rho, 0.9), evolve_unitary(X, rho, 0.9), atol=1e-8
    )
    got = integrate_non_hermitian(NonHermitianModel(np.zeros((2, 2)), 0.3 * np.eye(2)), rho, 1.5)
    np.testing.assert_allclose(got, rho * np.exp(-0.9), atol=1e-8)


def test_trace_distance_examples():
    rng = np.random.default_rng(4)
    rho = random_density_matrix(3, rng)
    assert trace_distance(rho, rho) == 0.0
    assert trace_distance(EXCITED, GROUND) == pytest.approx(1.0)
    r1, r2 = np.array([0.3, -0.2, 0.5]), np.array([-0.1, 0.4, 0.2])
    bloch = lambda r: 0.5 * (np.eye(2) + r[0] * X + r[1] * Y + r[2] * Z)
    assert trace_distance(bloch(r1), bloch(r2)) == pytest.approx(np.linalg.norm(r1 - r2) / 2, abs=1e-12)
    with pytest.raises(DimensionError):
        trace_distance(rho, EXCITED)


def test_observable_distance_examples():
    rng = np.random.default_rng(5)
    r1, r2 = random_density_matrix(2, rng), random_density_matrix(2, rng)
    assert observable_distance(Z, r1, r1) == 0.0
    assert observable_distance(np.eye(2), r1, r2) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValidationError):
        observable_distance(np.zeros((2, 2)), r1, r2)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@given(seeds)
def test_observable_distance_below_trace_distance(seed):
    rng = np.random.default_rng(seed)
    O = random_hermitian(3, rng)
    r1, r2 = random_density_matrix(3, rng), random_density_matrix(3, rng)
    assert observable_distance(O, r1, r2) <= trace_distance(r1, r2) + 1e-12


@settings(max_examples=50)
@given(seeds, st.sampled_from([2, 4]), st.integers(min_value=1, max_value=3), st.floats(min_value=0.1, max_value=2.0))
def test_master_output_is_density_matrix(seed, d, N, t):
    rng = np.random.default_rng(seed)
    m = random_model(rng, d, N, gamma_max=1.0)
    rho = integrate_master(m, random_density_matrix(d, rng), t, steps=max(16, int(200 * t)))
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-12)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-8)
    assert np.linalg.eigvalsh(rho)[0] > -1e-6


@given(seeds, st.floats(min_value=0.1, max_value=1.0), st.floats(min_value=0.1, max_value=1.0))
def test_semigroup(seed, t1, t2):
    rng = np.random.default_rng(seed)
    m = random_model(rng, 2, 2)
    rho0 = random_density_matrix(2, rng)
    direct = integrate_master(m, rho0, t1 + t2, steps=400)
    split = integrate_master(m, integrate_master(m, rho0, t1, steps=200), t2, steps=200)
    np.testing.assert_allclose(direct, split, atol=1e-6)


@given(seeds, st.floats(min_value=-5, max_value=5))
def test_heisenberg_preserves_spectrum(seed, s):
    rng = np.random.default_rng(seed)
    H, xi = random_hermitian(4, rng), random_hermitian(4, rng)
    np.testing.assert_allclose(np.linalg.eigvalsh(heisenberg(H, xi, s)), np.linalg.eigvalsh(xi), atol=1e-10)
