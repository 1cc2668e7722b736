import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dysonsim.errors import DimensionError, ValidationError
from dysonsim.linalg import random_density_matrix, random_hermitian, spectral_norm
from dysonsim.pauli import (
    SIGMA_MINUS,
    coefficient_bounds,
    decompose,
    embed_dimension,
    from_word_coeffs,
    index_to_word,
    pauli_basis,
    pauli_matrix,
    validate_word,
    word_to_index,
)


@pytest.mark.parametrize("qubits", [1, 2, 3])
def test_basis_orthogonality_and_unitarity(qubits):
    b = pauli_basis(qubits)
    d = b.dim
    gram = np.einsum("aij,bji->ab", b.elements, b.elements)
    np.testing.assert_allclose(gram, d * np.eye(b.size), atol=1e-12)
    for Q in b.elements:
        np.testing.assert_allclose(Q, Q.conj().T)
        np.testing.assert_allclose(Q @ Q, np.eye(d), atol=1e-15)
        assert spectral_norm(Q) == pytest.approx(1.0)
        assert np.linalg.norm(Q) == pytest.approx(np.sqrt(d))


def test_word_ordering():
    assert word_to_index("I") == 0
    assert word_to_index("ZX") == 13
    assert index_to_word(13, 2) == "ZX"
    assert pauli_basis(2).words[:5] == ["II", "IX", "IY", "IZ", "XI"]
    np.testing.assert_array_equal(pauli_basis(2)[13], pauli_matrix("ZX"))


def test_invalid_word():
    with pytest.raises(ValidationError, match="XQ"):
        validate_word("XQ")
    with pytest.raises(ValidationError):
        validate_word("X", qubits=2)


def test_embed_dimension():
    A = np.arange(16).reshape(4, 4)
    np.testing.assert_array_equal(embed_dimension(A), A)
    B = np.ones((3, 3))
    E = embed_dimension(B)
    assert E.shape == (4, 4)
    assert np.all(E[3] == 0) and np.all(E[:, 3] == 0)
    rho = random_density_matrix(3, np.random.default_rng(0))
    assert np.trace(embed_dimension(rho)) == pytest.approx(1.0)


def test_decompose_examples():
    assert decompose(np.eye(2)).terms == ((0, 1.0),)
    assert decompose(SIGMA_MINUS).terms == ((1, 0.5), (2, -0.5j))


def test_coefficient_bounds_sigma_minus():
    l2, l1, sqrt_m = coefficient_bounds(decompose(SIGMA_MINUS))
    assert l2 == pytest.approx(0.5)
    assert l1 == pytest.approx(1.0)
    assert sqrt_m == pytest.approx(np.sqrt(2))


@pytest.mark.parametrize("word", ["X", "ZY", "IXZ"])
def test_coefficient_bounds_single_element(word):
    assert coefficient_bounds(decompose(pauli_matrix(word))) == pytest.approx((1.0, 1.0, 1.0))


def test_decompose_dimension_mismatch():
    with pytest.raises(DimensionError):
        decompose(np.eye(4), pauli_basis(1))
    with pytest.raises(DimensionError):
        decompose(np.eye(3))


def test_from_word_coeffs_matches_decompose():
    dec = from_word_coeffs({"XI": 0.5, "YI": -0.5j}, 2)
    ref = decompose(np.kron(SIGMA_MINUS, np.eye(2)))
    assert dec.terms == ref.terms
    assert dec.source_norm == pytest.approx(1.0)


def test_embedded_decomposition_reconstructs_block():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    R = decompose(embed_dimension(A)).reconstruct()
    np.testing.assert_allclose(R[:3, :3], A, atol=1e-12)
    np.testing.assert_allclose(R[3], 0, atol=1e-12)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@given(seeds, st.integers(min_value=1, max_value=3))
def test_round_trip_and_bounds(seed, qubits):
    rng = np.random.default_rng(seed)
    d = 2**qubits
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    dec = decompose(A)
    np.testing.assert_allclose(dec.reconstruct(), A, atol=1e-12)
    unit = decompose(A / spectral_norm(A))
    l2, l1, sqrt_m = coefficient_bounds(unit)
    assert l2 <= 1 + 1e-12
    assert l1 <= sqrt_m + 1e-12


@given(seeds)
def test_hermitian_coefficients_real(seed):
    H = random_hermitian(4, np.random.default_rng(seed))
    assert np.max(np.abs(decompose(H).coeffs.imag)) < 1e-12
