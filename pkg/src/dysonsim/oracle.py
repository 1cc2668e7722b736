"""Reference dynamics: unitary propagation, RK4 master-equation integration,
and the distance measures used to score approximations."""

from __future__ import annotations

import math
import threading

import numpy as np

from . import tolerances as tol
from .errors import DimensionError, StiffnessError, ValidationError
from .linalg import as_square, hermitize, matexp, spectral_norm, trace_norm
from .model import LindbladModel, NonHermitianModel, generator_rhs, non_hermitian_rhs


class PropagatorCache:
    """Memoized ``U(t) = exp(-iHt)`` for a fixed Hamiltonian."""

    def __init__(self, hamiltonian):
        self.hamiltonian = as_square(hamiltonian, "hamiltonian").copy()
        self.hamiltonian.setflags(write=False)
        self._store: dict[float, np.ndarray] = {}
        self._lock = threading.Lock()

    def __call__(self, t: float) -> np.ndarray:
        t = float(t)
        with self._lock:
            U = self._store.get(t)
        if U is None:
            U = np.eye(self.hamiltonian.shape[0], dtype=np.complex128) if t == 0.0 else matexp(self.hamiltonian, -1j * t)
            U.setflags(write=False)
            with self._lock:
                U = self._store.setdefault(t, U)
        return U


_CACHES: dict[bytes, PropagatorCache] = {}
_CACHES_LOCK = threading.Lock()


def propagator(hamiltonian) -> PropagatorCache:
    H = as_square(hamiltonian, "hamiltonian")
    key = H.tobytes() + str(H.shape).encode()
    with _CACHES_LOCK:
        cache = _CACHES.get(key)
        if cache is None:
            if len(_CACHES) > 64:
                _CACHES.clear()
            cache = _CACHES[key] = PropagatorCache(H)
    return cache


def _same_dim(H, A, name):
    A = as_square(A, name)
    if A.shape != H.shape:
        raise DimensionError(f"{name} shape {A.shape} does not match hamiltonian {H.shape}")
    return A


def evolve_unitary(H, rho0, t: float) -> np.ndarray:
    """``exp(-iHt) rho0 exp(iHt)``."""
    U = propagator(H)(t)
    rho0 = _same_dim(U, rho0, "rho0")
    return U @ rho0 @ U.conj().T


def heisenberg(H, xi, s: float) -> np.ndarray:
    """``exp(iHs) xi exp(-iHs)``."""
    U = propagator(H)(s)
    xi = _same_dim(U, xi, "operator")
    return U.conj().T @ xi @ U


class EigenPropagator:
    """Unitary propagation through the spectral decomposition of H.

    Vectorized over arrays of times; used by the series code, which needs
    propagators at many times at once.
    """

    def __init__(self, hamiltonian):
        H = as_square(hamiltonian, "hamiltonian")
        self.energies, self.vectors = np.linalg.eigh(H)
        self.dim = H.shape[0]

    def unitary(self, times) -> np.ndarray:
        """``exp(-iHt)`` with shape ``shape(times) + (d, d)``."""
        times = np.asarray(times, dtype=float)
        phases = np.exp(-1j * times[..., None] * self.energies)
        return (self.vectors * phases[..., None, :]) @ self.vectors.conj().T

    def heisenberg(self, xi, times) -> np.ndarray:
        U = self.unitary(times)
        return np.swapaxes(U.conj(), -1, -2) @ xi @ U

    def to_eigenbasis(self, A) -> np.ndarray:
        return self.vectors.conj().T @ A @ self.vectors

    def from_eigenbasis(self, A) -> np.ndarray:
        return self.vectors @ A @ self.vectors.conj().T

    def gaps(self) -> np.ndarray:
        """``E_a - E_b`` as a (d, d) array."""
        return self.energies[:, None] - self.energies[None, :]


def _rk4(rhs, rho, t0: float, t1: float, steps: int, check_psd: bool) -> np.ndarray:
    h = (t1 - t0) / steps
    s = t0
    for _ in range(steps):
        k1 = rhs(rho, s)
        k2 = rhs(rho + 0.5 * h * k1, s + 0.5 * h)
        k3 = rhs(rho + 0.5 * h * k2, s + 0.5 * h)
        k4 = rhs(rho + h * k3, s + h)
        rho = hermitize(rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
        s += h
        if check_psd:
            lo = np.linalg.eigvalsh(rho)[0]
            if lo < -tol.STIFFNESS:
                raise StiffnessError(
                    f"state eigenvalue {lo:.3e} < -{tol.STIFFNESS:g} at s={s:.6g}; use a smaller step (more steps)"
                )
    return rho


def default_steps(t: float, per_unit: int = tol.ORACLE_STEPS_PER_UNIT) -> int:
    return max(1, math.ceil(per_unit * abs(t)))


def _initial(model, rho0):
    rho0 = as_square(rho0, "rho0")
    if rho0.shape != (model.dim, model.dim):
        raise DimensionError(f"rho0 shape {rho0.shape} does not match model dimension {model.dim}")
    return rho0


def integrate_master(model: LindbladModel, rho0, t: float, steps: int | None = None, t0: float = 0.0) -> np.ndarray:
    """Classical RK4 for the master equation on a uniform grid over [t0, t]."""
    rho0 = _initial(model, rho0)
    steps = default_steps(t - t0) if steps is None else int(steps)
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    if t == t0:
        return rho0.copy()
    return _rk4(lambda r, s: generator_rhs(model, r, s), rho0, t0, t, steps, check_psd=True)


def master_trajectory(model: LindbladModel, rho0, times, steps_per_unit: int = tol.ORACLE_STEPS_PER_UNIT) -> list[np.ndarray]:
    """States at increasing ``times``, integrating segment by segment."""
    out = []
    rho = _initial(model, rho0)
    prev = 0.0
    for t in times:
        if t < prev:
            raise ValidationError("times must be non-decreasing and >= 0")
        rho = integrate_master(model, rho, t, default_steps(t - prev, steps_per_unit), t0=prev)
        out.append(rho)
        prev = t
    return out


def integrate_non_hermitian(
    model: NonHermitianModel, rho0, t: float, steps: int | None = None, t0: float = 0.0
) -> np.ndarray:
    """RK4 for ``d rho/dt = -i[H, rho] - {Gamma, rho}``; trace is not preserved."""
    rho0 = _initial(model, rho0)
    steps = default_steps(t - t0) if steps is None else int(steps)
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    if t == t0:
        return rho0.copy()
    return _rk4(lambda r, s: non_hermitian_rhs(model, r), rho0, t0, t, steps, check_psd=True)


def non_hermitian_trajectory(model: NonHermitianModel, rho0, times, steps_per_unit: int = tol.ORACLE_STEPS_PER_UNIT):
    out = []
    rho = _initial(model, rho0)
    prev = 0.0
    for t in times:
        if t < prev:
            raise ValidationError("times must be non-decreasing and >= 0")
        rho = integrate_non_hermitian(model, rho, t, default_steps(t - prev, steps_per_unit), t0=prev)
        out.append(rho)
        prev = t
    return out


def oracle_trajectory(model, rho0, times, steps_per_unit: int = tol.ORACLE_STEPS_PER_UNIT):
    if isinstance(model, NonHermitianModel):
        return non_hermitian_trajectory(model, rho0, times, steps_per_unit)
    return master_trajectory(model, rho0, times, steps_per_unit)


def trace_distance(rho1, rho2) -> float:
    rho1 = as_square(rho1, "rho1")
    rho2 = as_square(rho2, "rho2")
    if rho1.shape != rho2.shape:
        raise DimensionError(f"shape mismatch {rho1.shape} vs {rho2.shape}")
    return 0.5 * trace_norm(rho1 - rho2)


def observable_distance(O, rho1, rho2) -> float:
    """``|Tr(O (rho1 - rho2))| / (2 ||O||)``."""
    O = as_square(O, "observable")
    nrm = spectral_norm(O)
    if nrm == 0.0:
        raise ValidationError("observable is zero")
    diff = as_square(rho1, "rho1") - as_square(rho2, "rho2")
    if diff.shape != O.shape:
        raise DimensionError("observable and states have different dimensions")
    return abs(np.trace(O @ diff)) / (2.0 * nrm)


def expectation(O, rho) -> complex:
    return complex(np.einsum("ij,ji->", O, rho))
