"""Dense complex matrix helpers.

Operators are plain ``numpy`` arrays of dtype ``complex128``; every function
here is pure and returns a fresh array.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionError, RangeError


def as_square(A, name: str = "matrix") -> np.ndarray:
    """Return ``A`` as a finite square complex128 array or raise."""
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise RangeError(f"{name} has non-finite entries")
    return A


def _conformable(A, B):
    A = as_square(A, "A")
    B = as_square(B, "B")
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    return A, B


def matexp(A, scale: complex = 1.0) -> np.ndarray:
    """Matrix exponential ``exp(scale * A)``.

    Scaling and squaring around a degree-13 Padé approximant
    (``scipy.linalg.expm``).

    Raises:
        DimensionError: ``A`` is not square.
        RangeError: the result overflows.
    """
    A = as_square(A, "A")
    X = complex(scale) * A
    if not np.all(np.isfinite(X)):
        raise RangeError("scale * A has non-finite entries")
    with np.errstate(over="ignore", invalid="ignore"):
        out = scipy.linalg.expm(X)
    if not np.all(np.isfinite(out)):
        raise RangeError(f"matrix exponential overflowed (norm {np.linalg.norm(X, np.inf):.3g})")
    return np.asarray(out, dtype=np.complex128)


def singular_values(A) -> np.ndarray:
    A = as_square(A, "A")
    return np.linalg.svd(A, compute_uv=False)


def trace_norm(A) -> float:
    """Sum of singular values (Schatten 1-norm)."""
    return float(np.sum(singular_values(A)))


def spectral_norm(A) -> float:
    """Largest singular value."""
    s = singular_values(A)
    return float(s[0]) if s.size else 0.0


def dagger(A) -> np.ndarray:
    return as_square(A, "A").conj().T


def commutator(A, B) -> np.ndarray:
    A, B = _conformable(A, B)
    return A @ B - B @ A


def anticommutator(A, B) -> np.ndarray:
    A, B = _conformable(A, B)
    return A @ B + B @ A


def is_hermitian(A, tol: float = 1e-10) -> bool:
    A = as_square(A, "A")
    return bool(np.max(np.abs(A - A.conj().T), initial=0.0) <= tol)


def hermitize(A) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    Z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    phases = np.diag(R) / np.abs(np.diag(R))
    return Q * phases


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    Z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * 0.5 * (Z + Z.conj().T)


def random_density_matrix(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    G = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real
