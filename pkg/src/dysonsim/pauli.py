"""Pauli tensor-product basis and operator decomposition.

Basis elements are indexed by base-4 words over ``I < X < Y < Z``, leftmost
qubit most significant, so index 0 is the identity.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import tolerances as tol
from .errors import DimensionError, ValidationError
from .linalg import as_square, spectral_norm

PAULI_LETTERS = "IXYZ"
_SINGLE = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=np.complex128)
SIGMA_PLUS = SIGMA_MINUS.T.copy()
MAX_QUBITS = 4


def pauli_matrix(word: str) -> np.ndarray:
    """Tensor product of single-qubit Paulis named by ``word`` (e.g. ``"XZ"``)."""
    word = validate_word(word)
    out = np.eye(1, dtype=np.complex128)
    for ch in word:
        out = np.kron(out, _SINGLE[ch])
    return out


def validate_word(word: str, qubits: int | None = None) -> str:
    if not isinstance(word, str) or not word:
        raise ValidationError(f"invalid Pauli word {word!r}")
    w = word.upper()
    bad = [c for c in w if c not in PAULI_LETTERS]
    if bad:
        raise ValidationError(f"invalid Pauli word {word!r}: letters must be from {PAULI_LETTERS}")
    if qubits is not None and len(w) != qubits:
        raise ValidationError(f"Pauli word {word!r} has length {len(w)}, expected {qubits} qubits")
    return w


def word_to_index(word: str) -> int:
    idx = 0
    for ch in validate_word(word):
        idx = 4 * idx + PAULI_LETTERS.index(ch)
    return idx


def index_to_word(index: int, qubits: int) -> str:
    letters = []
    for _ in range(qubits):
        index, r = divmod(index, 4)
        letters.append(PAULI_LETTERS[r])
    return "".join(reversed(letters))


@dataclass(frozen=True, eq=False)
class PauliBasis:
    qubits: int
    elements: np.ndarray

    @property
    def dim(self) -> int:
        return 2**self.qubits

    @property
    def size(self) -> int:
        return 4**self.qubits

    @property
    def words(self) -> list[str]:
        return [index_to_word(i, self.qubits) for i in range(self.size)]

    def __getitem__(self, index: int) -> np.ndarray:
        return self.elements[index]


@functools.lru_cache(maxsize=None)
def pauli_basis(qubits: int) -> PauliBasis:
    """Shared, read-only basis for ``qubits`` qubits."""
    if not 1 <= qubits <= MAX_QUBITS:
        raise ValidationError(f"qubit count must be in [1, {MAX_QUBITS}], got {qubits}")
    mats = [pauli_matrix("".join(w)) for w in itertools.product(PAULI_LETTERS, repeat=qubits)]
    elements = np.array(mats)
    elements.setflags(write=False)
    return PauliBasis(qubits, elements)


def qubits_for_dim(d: int) -> int:
    l = int(round(math.log2(d))) if d > 0 else -1
    if l < 0 or 2**l != d:
        raise DimensionError(f"dimension {d} is not a power of two; embed it first")
    return l


def embedded_dim(d: int) -> int:
    return 1 << max(0, math.ceil(math.log2(d))) if d > 1 else 1


def embed_dimension(A) -> np.ndarray:
    """Zero-pad a square matrix up to the next power-of-two dimension."""
    A = as_square(A, "operator")
    d = A.shape[0]
    D = embedded_dim(d)
    if D == d:
        return A
    out = np.zeros((D, D), dtype=np.complex128)
    out[:d, :d] = A
    return out


@dataclass(frozen=True)
class PauliDecomposition:
    """Sparse expansion ``sum_k q_k Q_k`` over a Pauli basis."""

    qubits: int
    terms: tuple[tuple[int, complex], ...]
    source_norm: float = float("nan")

    @property
    def support(self) -> int:
        return len(self.terms)

    M = support

    @property
    def indices(self) -> np.ndarray:
        return np.array([k for k, _ in self.terms], dtype=int)

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([q for _, q in self.terms], dtype=np.complex128)

    def reconstruct(self) -> np.ndarray:
        basis = pauli_basis(self.qubits)
        out = np.zeros((basis.dim, basis.dim), dtype=np.complex128)
        for k, q in self.terms:
            out += q * basis[k]
        return out

    def scaled(self, factor: complex) -> "PauliDecomposition":
        return PauliDecomposition(
            self.qubits, tuple((k, factor * q) for k, q in self.terms), abs(factor) * self.source_norm
        )

    def to_dict(self) -> dict[str, list[float]]:
        return {index_to_word(k, self.qubits): [q.real, q.imag] for k, q in self.terms}


def decompose(A, basis: PauliBasis | None = None, prune: float = tol.PAULI_PRUNE) -> PauliDecomposition:
    """Coefficients ``q_k = Tr(Q_k A) / d``, dropping ``|q_k| < prune``."""
    A = as_square(A, "operator")
    if basis is None:
        basis = pauli_basis(qubits_for_dim(A.shape[0]))
    if A.shape[0] != basis.dim:
        raise DimensionError(f"operator dimension {A.shape[0]} does not match basis dimension {basis.dim}")
    # Tr(Q_k A) = sum_ij Q_k[i, j] A[j, i]
    q = np.einsum("kij,ji->k", basis.elements, A) / basis.dim
    terms = tuple((int(k), complex(q[k])) for k in np.nonzero(np.abs(q) >= prune)[0])
    return PauliDecomposition(basis.qubits, terms, spectral_norm(A))


def from_word_coeffs(words: Mapping[str, complex], qubits: int) -> PauliDecomposition:
    """Build a decomposition from ``{"XZ": coeff, ...}`` without calling ``decompose``."""
    acc: dict[int, complex] = {}
    for w, q in words.items():
        k = word_to_index(validate_word(w, qubits))
        acc[k] = acc.get(k, 0.0) + complex(q)
    terms = tuple((k, q) for k, q in sorted(acc.items()) if abs(q) >= tol.PAULI_PRUNE)
    dec = PauliDecomposition(qubits, terms)
    return PauliDecomposition(qubits, terms, spectral_norm(dec.reconstruct()))


def coefficient_bounds(dec: PauliDecomposition) -> tuple[float, float, float]:
    """``(sum |q|^2, sum |q|, sqrt(M))`` for a decomposition."""
    c = np.abs(dec.coeffs)
    return float(np.sum(c**2)), float(np.sum(c)), math.sqrt(dec.support)
