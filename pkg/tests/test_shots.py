import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dysonsim.dyson import AdjointChainSpec, build_adjoint_chain
from dysonsim.errors import BudgetError, ConsistencyError, DimensionError
from dysonsim.linalg import random_density_matrix, random_hermitian
from dysonsim.model import LindbladModel, NonHermitianModel, RateFunction
from dysonsim.oracle import heisenberg
from dysonsim.pauli import SIGMA_MINUS, pauli_matrix, word_to_index
from dysonsim.rng import RngStream
from dysonsim.shots import (
    CorrelatorChain,
    chains_for_spec,
    draw_outcomes,
    exact_chain_expectation,
    prepare,
    sample_A_shots,
    single_shot,
    single_shot_A,
    template_count,
)

from conftest import EXCITED, GROUND, PLUS

X, Y, Z = (pauli_matrix(w) for w in "XYZ")


def random_sparse_model(rng, qubits=1, N=2):
    """Few-term Pauli channels keep the chain count small."""
    d = 2**qubits
    H = random_hermitian(d, rng)
    sm = SIGMA_MINUS if qubits == 1 else np.kron(SIGMA_MINUS, np.eye(2))
    ops = [sm, Z if qubits == 1 else pauli_matrix("ZZ")]
    chans = []
    for i in range(N):
        g = float(rng.uniform(0.05, 0.5))
        rate = RateFunction.sinusoid(g, float(rng.uniform(0.5, 3))) if i == 1 else g
        chans.append((ops[i % 2], rate))
    return LindbladModel.build(H, chans)


def test_identity_chain():
    chain = CorrelatorChain(1, ((0, 0.7),))
    assert exact_chain_expectation(chain, PLUS, X) == pytest.approx(1.0)
    assert all(single_shot(chain, PLUS, X, RngStream(1, 0).sample(k)).real_part == 1 for k in range(50))


def test_single_factor_reduces_to_expectation():
    H = random_hermitian(2, np.random.default_rng(0))
    rho = random_density_matrix(2, np.random.default_rng(1))
    chain = CorrelatorChain(1, ((word_to_index("X"), 1.3),))
    assert exact_chain_expectation(chain, rho, H) == pytest.approx(np.trace(rho @ heisenberg(H, X, 1.3)), abs=1e-14)


def test_chain_errors():
    with pytest.raises(DimensionError):
        exact_chain_expectation(CorrelatorChain(1, ((1, 0.0),)), np.eye(4) / 4, X)
    with pytest.raises(ConsistencyError):
        draw_outcomes(np.array([1.5 + 0j]), np.zeros((1, 2)))


def test_sandwich_contraction_matches_direct():
    # n = 1, sandwich variant only: sum over (a, b) of conj(q_a) q_b <Q_a(s) O(t) Q_b(s)>
    H = random_hermitian(2, np.random.default_rng(2))
    rho = random_density_matrix(2, np.random.default_rng(3))
    q = {1: 0.5, 2: -0.5j}
    t, s = 1.1, 0.4
    total = 0j
    for (a, qa), (b, qb) in itertools.product(q.items(), repeat=2):
        chain = CorrelatorChain(1, ((a, s), (word_to_index("Z"), t), (b, s)))
        total += np.conj(qa) * qb * exact_chain_expectation(chain, rho, H)
    L_s = heisenberg(H, SIGMA_MINUS, s)
    direct = np.trace(rho @ L_s.conj().T @ heisenberg(H, Z, t) @ L_s)
    assert total == pytest.approx(direct, abs=1e-12)


def test_chains_reproduce_adjoint_chain(two_qubit):
    rho = np.kron(EXCITED, GROUND)
    O = pauli_matrix("ZI")
    spec = AdjointChainSpec((1, 0), (0.8, 0.3), O, 1.2)
    problem = prepare(two_qubit, rho, O, 1.2)
    total = sum(c.prefactor * exact_chain_expectation(c, rho, two_qubit.hamiltonian) for c in chains_for_spec(spec, problem))
    expected = np.trace(rho @ build_adjoint_chain(spec, two_qubit))
    assert total == pytest.approx(expected, abs=1e-12)


def test_real_part_zero_case():
    # <+| Y |+> = 0 under H = 0
    chain = CorrelatorChain(1, ((word_to_index("Y"), 0.0),))
    stream = RngStream(5, 0)
    shots = [single_shot(chain, PLUS, np.zeros((2, 2)), stream.sample(k)).real_part for k in range(100_000)]
    assert abs(np.mean(shots)) <= 4 / np.sqrt(1e5)


def test_shot_outcome_statistics():
    H = random_hermitian(2, np.random.default_rng(6))
    chain = CorrelatorChain(1, ((1, 0.9), (3, 0.2), (2, 0.5)))
    e = exact_chain_expectation(chain, PLUS, H)
    u = np.random.default_rng(7).random((100_000, 2))
    r, m = draw_outcomes(np.full(100_000, e), u)
    assert set(np.unique(r)) <= {-1, 1} and set(np.unique(m)) <= {-1, 1}
    for vals, mean in ((r, e.real), (m, e.imag)):
        assert abs(vals.mean() - mean) <= 4 * np.sqrt((1 - mean**2) / 1e5)


def test_order_zero_single_shot():
    O = 0.5 * X + 0.3 * Z
    m = LindbladModel.build(0.5 * Y, [(SIGMA_MINUS, 0.1)])
    spec = AdjointChainSpec((), (), O, 0.8)
    vals = sample_A_shots(spec, m, PLUS, 100_000, np.random.default_rng(8))
    expected = np.trace(PLUS @ heisenberg(m.hamiltonian, O, 0.8)).real
    assert abs(vals.mean() - expected) <= 4 * vals.std() / np.sqrt(vals.size)


def test_magnitude_bound_two_channel(two_qubit):
    rho = np.kron(EXCITED, GROUND)
    O = pauli_matrix("ZI")
    problem = prepare(two_qubit, rho, O, 1.0)
    spec = AdjointChainSpec((0, 1), (0.7, 0.2), O, 1.0)
    vals = sample_A_shots(spec, two_qubit, rho, 10_000, np.random.default_rng(9), problem)
    # |A| <= 2 sqrt(M_O) (2 gamma_bar M)^n with M_O = 1, M = 2, gamma_bar = 0.1
    assert np.max(np.abs(vals)) <= 2 * (2 * 0.1 * 2) ** 2


def test_support_is_finite():
    m = LindbladModel.build(0.3 * X, [(Z, 0.2)])
    vals = sample_A_shots(AdjointChainSpec((0,), (0.4,), Z, 1.0), m, EXCITED, 5000, np.random.default_rng(10))
    # 3 chains, 2 binary outcomes each, fixed prefactors
    assert len(np.unique(np.round(vals, 12))) <= 2**6


def test_reproducible_with_fixed_stream():
    m = LindbladModel.build(0.3 * X, [(SIGMA_MINUS, 0.2)])
    spec = AdjointChainSpec((0, 0), (0.6, 0.1), Z, 1.0)
    a = [single_shot_A(spec, m, PLUS, RngStream(3, 1).sample(k)) for k in range(20)]
    b = [single_shot_A(spec, m, PLUS, RngStream(3, 1).sample(k)) for k in range(20)]
    assert a == b


def test_template_limit():
    rng = np.random.default_rng(11)
    d = 4
    L = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = LindbladModel.build(random_hermitian(d, rng), [(L / np.linalg.norm(L, 2), 0.1)])
    problem = prepare(m, np.eye(d) / d, random_hermitian(d, rng), 1.0)
    assert template_count(problem.model, (0, 0, 0), problem.decomps) > 200_000
    with pytest.raises(BudgetError):
        problem.templates((0, 0, 0))


def test_non_hermitian_shots(feshbach):
    spec = AdjointChainSpec((0, 0), (0.7, 0.3), Z, 1.0)
    vals = sample_A_shots(spec, feshbach, GROUND, 100_000, np.random.default_rng(12))
    expected = np.trace(GROUND @ build_adjoint_chain(spec, feshbach)).real
    assert abs(vals.mean() - expected) <= 4 * vals.std() / np.sqrt(vals.size)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=20)
@given(seeds, st.integers(min_value=0, max_value=2), st.sampled_from([1, 2]))
def test_unbiased(seed, n, qubits):
    rng = np.random.default_rng(seed)
    m = random_sparse_model(rng, qubits)
    d = 2**qubits
    rho = random_density_matrix(d, rng)
    O = pauli_matrix("X" * qubits) * 0.6 + pauli_matrix("Z" * qubits) * 0.4
    t = float(rng.uniform(0.2, 1.5))
    spec = AdjointChainSpec(
        tuple(int(i) for i in rng.integers(0, 2, n)), tuple(sorted(rng.uniform(0, t, n), reverse=True)), O, t
    )
    vals = sample_A_shots(spec, m, rho, 100_000, rng)
    expected = np.trace(rho @ build_adjoint_chain(spec, m)).real
    assert abs(vals.mean() - expected) <= 4 * vals.std() / np.sqrt(vals.size) + 1e-12
