"""Dissipative and non-Hermitian models and their equations of motion.

Conventions: hbar = 1, Pauli matrices in the standard computational
ordering, ``sigma_minus = (X - iY)/2 = [[0, 0], [1, 0]]``.  The state
``e_0 = (1, 0)`` is the *excited* level (Z = +1) and ``e_1`` the ground level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import tolerances as tol
from .errors import DimensionError, ValidationError
from .linalg import as_square, is_hermitian, spectral_norm

RATE_KINDS = ("constant", "sinusoid", "tabulated")
CHANNEL_KINDS = ("lindblad", "anticommutator")


@dataclass(frozen=True)
class RateFunction:
    """Time-dependent rate gamma(s).

    ``constant``: gamma(s) = value.
    ``sinusoid``: gamma(s) = value * sin(omega * s + phase).
    ``tabulated``: linear interpolation through (grid, values), held
    constant outside the grid.
    """

    kind: str = "constant"
    value: float = 0.0
    omega: float = 0.0
    phase: float = 0.0
    grid: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in RATE_KINDS:
            raise ValidationError(f"unknown rate kind {self.kind!r}; expected one of {RATE_KINDS}")
        if self.kind == "tabulated":
            if len(self.grid) < 2 or len(self.grid) != len(self.values):
                raise ValidationError("tabulated rate needs >= 2 grid points and matching values")
            if np.any(np.diff(self.grid) <= 0):
                raise ValidationError("tabulated rate grid must be strictly increasing")
            object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        numbers = [self.value, self.omega, self.phase, *self.grid, *self.values]
        if not all(math.isfinite(x) for x in numbers):
            raise ValidationError("rate parameters must be finite")

    @classmethod
    def constant(cls, value: float) -> "RateFunction":
        return cls("constant", value=float(value))

    @classmethod
    def sinusoid(cls, amplitude: float, omega: float, phase: float = 0.0) -> "RateFunction":
        return cls("sinusoid", value=float(amplitude), omega=float(omega), phase=float(phase))

    @classmethod
    def tabulated(cls, grid: Sequence[float], values: Sequence[float]) -> "RateFunction":
        return cls("tabulated", grid=tuple(grid), values=tuple(values))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "constant":
            out = np.full(s.shape, self.value)
        elif self.kind == "sinusoid":
            out = self.value * np.sin(self.omega * s + self.phase)
        else:
            out = np.interp(s, self.grid, self.values)
        return out if out.ndim else float(out)

    def scaled(self, factor: float) -> "RateFunction":
        if self.kind == "tabulated":
            return RateFunction.tabulated(self.grid, [factor * v for v in self.values])
        return RateFunction(self.kind, value=factor * self.value, omega=self.omega, phase=self.phase)

    @property
    def is_zero(self) -> bool:
        if self.kind == "tabulated":
            return not any(self.values)
        return self.value == 0.0

    def sample_grid(self, t: float, samples: int = tol.RATE_SAMPLES) -> np.ndarray:
        """Dense grid on [0, t] including table knots and sign changes."""
        pts = [np.linspace(0.0, t, samples + 1)]
        if self.kind == "tabulated":
            g = np.asarray(self.grid)
            v = np.asarray(self.values)
            pts.append(g[(g > 0) & (g < t)])
            # zero crossings of the piecewise-linear table
            sign_change = np.nonzero(v[:-1] * v[1:] < 0)[0]
            roots = g[sign_change] - v[sign_change] * (g[sign_change + 1] - g[sign_change]) / (
                v[sign_change + 1] - v[sign_change]
            )
            pts.append(roots[(roots > 0) & (roots < t)])
        elif self.kind == "sinusoid" and self.omega != 0.0:
            ends = (self.phase, self.omega * t + self.phase)
            ks = np.arange(math.floor(min(ends) / math.pi), math.ceil(max(ends) / math.pi) + 1)
            roots = (ks * math.pi - self.phase) / self.omega
            pts.append(roots[(roots > 0) & (roots < t)])
        return np.unique(np.concatenate(pts))

    def gamma_bar(self, t: float) -> float:
        """max_{s in [0, t]} |gamma(s)|."""
        if self.kind == "constant":
            return abs(self.value)
        s = self.sample_grid(t)
        return float(np.max(np.abs(self(s))))

    def mean_abs(self, t: float) -> float:
        """(1/t) * integral_0^t |gamma(s)| ds; equals |gamma(0)| at t = 0."""
        if self.kind == "constant":
            return abs(self.value)
        if t <= 0:
            return abs(float(self(0.0)))
        s = self.sample_grid(t)
        return float(np.trapezoid(np.abs(self(s)), s) / t)

    def integral(self, t: float) -> float:
        if self.kind == "constant":
            return self.value * t
        s = self.sample_grid(t)
        return float(np.trapezoid(self(s), s))

    def integral_sq(self, t: float) -> float:
        if self.kind == "constant":
            return self.value**2 * t
        s = self.sample_grid(t)
        return float(np.trapezoid(self(s) ** 2, s))

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "sinusoid":
            return {"kind": "sinusoid", "amplitude": self.value, "omega": self.omega, "phase": self.phase}
        return {"kind": "tabulated", "grid": list(self.grid), "values": list(self.values)}


def as_rate(rate) -> RateFunction:
    if isinstance(rate, RateFunction):
        return rate
    return RateFunction.constant(float(rate))


@dataclass(frozen=True, eq=False)
class Channel:
    """One perturbative channel.

    ``lindblad``: gamma(s) (L xi L^+ - 1/2 {L^+ L, xi}).
    ``anticommutator``: -gamma(s) {L, xi} with Hermitian L (non-Hermitian
    Hamiltonian part).
    """

    operator: np.ndarray
    rate: RateFunction
    kind: str = "lindblad"

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ValidationError(f"unknown channel kind {self.kind!r}")
        op = as_square(self.operator, "channel operator").copy()
        op.setflags(write=False)
        object.__setattr__(self, "operator", op)
        object.__setattr__(self, "rate", as_rate(self.rate))
        if self.kind == "anticommutator" and not is_hermitian(op, tol.HERMITIAN):
            raise ValidationError("anticommutator channel operator must be Hermitian")

    @property
    def norm_exponent(self) -> int:
        """Power of ||L|| absorbed into the rate by normalization."""
        return 2 if self.kind == "lindblad" else 1

    def forward(self, xi: np.ndarray, gamma: float) -> np.ndarray:
        L = self.operator
        if self.kind == "lindblad":
            LdL = L.conj().T @ L
            return gamma * (L @ xi @ L.conj().T - 0.5 * (LdL @ xi + xi @ LdL))
        return -gamma * (L @ xi + xi @ L)

    def adjoint(self, xi: np.ndarray, gamma: float) -> np.ndarray:
        L = self.operator
        if self.kind == "lindblad":
            LdL = L.conj().T @ L
            return gamma * (L.conj().T @ xi @ L - 0.5 * (LdL @ xi + xi @ LdL))
        return -gamma * (L @ xi + xi @ L)


def _validate_hamiltonian(H) -> np.ndarray:
    H = as_square(H, "hamiltonian")
    if not is_hermitian(H, tol.HERMITIAN):
        raise ValidationError("hamiltonian must be Hermitian")
    H = H.copy()
    H.setflags(write=False)
    return H


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus an ordered list of Lindblad channels."""

    hamiltonian: np.ndarray
    lindblads: tuple[Channel, ...] = field(default_factory=tuple)

    def __post_init__(self):
        H = _validate_hamiltonian(self.hamiltonian)
        chans = []
        for item in self.lindblads:
            if not isinstance(item, Channel):
                op, rate = item
                item = Channel(op, as_rate(rate), "lindblad")
            if item.kind != "lindblad":
                raise ValidationError("LindbladModel accepts only lindblad channels")
            if item.operator.shape != H.shape:
                raise DimensionError(
                    f"Lindblad operator shape {item.operator.shape} does not match hamiltonian {H.shape}"
                )
            chans.append(item)
        object.__setattr__(self, "hamiltonian", H)
        object.__setattr__(self, "lindblads", tuple(chans))

    @classmethod
    def build(cls, hamiltonian, lindblads: Iterable = ()) -> "LindbladModel":
        return cls(hamiltonian, tuple(lindblads))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def N(self) -> int:
        return len(self.lindblads)

    @property
    def channels(self) -> tuple[Channel, ...]:
        return self.lindblads

    def rates(self, s) -> np.ndarray:
        """Rates of all channels at time(s) ``s``; shape ``(N,) + shape(s)``."""
        return np.array([c.rate(s) for c in self.lindblads], dtype=float)

    def is_normalized(self, atol: float = tol.ALGEBRAIC) -> bool:
        return all(abs(spectral_norm(c.operator) - 1.0) <= atol for c in self.lindblads)


@dataclass(frozen=True, eq=False)
class NonHermitianModel:
    """Effective generator J = H - i Gamma with Hermitian H and Gamma."""

    hamiltonian: np.ndarray
    gamma_op: np.ndarray

    def __post_init__(self):
        H = _validate_hamiltonian(self.hamiltonian)
        G = as_square(self.gamma_op, "gamma_op")
        if G.shape != H.shape:
            raise DimensionError(f"gamma_op shape {G.shape} does not match hamiltonian {H.shape}")
        if not is_hermitian(G, tol.HERMITIAN):
            raise ValidationError("gamma_op must be Hermitian")
        G = G.copy()
        G.setflags(write=False)
        object.__setattr__(self, "hamiltonian", H)
        object.__setattr__(self, "gamma_op", G)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def gamma_is_psd(self) -> bool:
        return bool(np.min(np.linalg.eigvalsh(self.gamma_op)) >= -tol.ALGEBRAIC)

    @property
    def channels(self) -> tuple[Channel, ...]:
        """Gamma as a single normalized anticommutator channel (rate ||Gamma||)."""
        g = spectral_norm(self.gamma_op)
        if g == 0.0:
            return ()
        return (Channel(self.gamma_op / g, RateFunction.constant(g), "anticommutator"),)

    @property
    def N(self) -> int:
        return len(self.channels)


def density_matrix(state, dim: int | None = None) -> np.ndarray:
    """Validate a density matrix, or build one from a state vector."""
    arr = np.asarray(state, dtype=np.complex128)
    if arr.ndim == 1:
        nrm = np.linalg.norm(arr)
        if nrm == 0:
            raise ValidationError("state vector is zero")
        arr = arr / nrm
        arr = np.outer(arr, arr.conj())
    rho = as_square(arr, "density matrix")
    if dim is not None and rho.shape[0] != dim:
        raise DimensionError(f"density matrix has dimension {rho.shape[0]}, expected {dim}")
    if not is_hermitian(rho, tol.HERMITIAN):
        raise ValidationError("density matrix must be Hermitian")
    if abs(np.trace(rho) - 1.0) > tol.ALGEBRAIC:
        raise ValidationError(f"density matrix trace is {np.trace(rho).real:.12g}, expected 1")
    if np.min(np.linalg.eigvalsh(rho)) < -tol.PSD_STATE:
        raise ValidationError("density matrix has negative eigenvalues")
    return rho


def normalize_lindblads(model):
    """Rescale every channel to unit spectral norm without changing the generator.

    Lindblad channels absorb ``||L||**2`` into the rate; anticommutator
    channels absorb ``||L||``.
    """
    if isinstance(model, NonHermitianModel):
        return model
    out = []
    for i, c in enumerate(model.lindblads):
        nrm = spectral_norm(c.operator)
        if nrm == 0.0:
            raise ValidationError(f"Lindblad operator {i} is zero")
        out.append(Channel(c.operator / nrm, c.rate.scaled(nrm**c.norm_exponent), c.kind))
    return LindbladModel(model.hamiltonian, tuple(out))


def _check_state(model, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (model.dim, model.dim):
        raise DimensionError(f"state shape {rho.shape} does not match model dimension {model.dim}")
    return rho


def generator_rhs(model, rho, s: float) -> np.ndarray:
    """-i[H, rho] plus every channel's forward action at time ``s``."""
    rho = _check_state(model, rho)
    H = model.hamiltonian
    out = -1j * (H @ rho - rho @ H)
    for c in model.channels:
        g = c.rate(s)
        if g != 0.0:
            out = out + c.forward(rho, g)
    return out


def lindblad_rhs(model: LindbladModel, rho, s: float) -> np.ndarray:
    """Right-hand side of the master equation at time ``s``."""
    return generator_rhs(model, rho, s)


def dissipator_only(model: LindbladModel, rho, s: float, which: Iterable[int]) -> np.ndarray:
    """Dissipator restricted to the channels in ``which``; Hamiltonian omitted."""
    rho = _check_state(model, rho)
    out = np.zeros_like(rho)
    for i in sorted(set(which)):
        if not 0 <= i < model.N:
            raise IndexError(f"channel index {i} out of range for {model.N} channels")
        c = model.lindblads[i]
        out = out + c.forward(rho, c.rate(s))
    return out


def non_hermitian_rhs(model: NonHermitianModel, rho) -> np.ndarray:
    """-i[H, rho] - {Gamma, rho}."""
    rho = _check_state(model, rho)
    H, G = model.hamiltonian, model.gamma_op
    return -1j * (H @ rho - rho @ H) - (G @ rho + rho @ G)


@dataclass(frozen=True)
class ValidityReport:
    flag: str
    has_negative_rate: bool
    min_rate: float
    min_running_integral: float
    horizon: float


def check_nonmarkovian_validity(rate: RateFunction, t: float) -> ValidityReport:
    """Classify a rate on [0, t] as markovian, valid-non-markovian or invalid.

    A sign-changing rate is acceptable when its running integral stays
    positive on (0, t].
    """
    rate = as_rate(rate)
    s = rate.sample_grid(t)
    g = np.asarray(rate(s), dtype=float)
    running = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(s))])
    min_running = float(np.min(running[1:])) if running.size > 1 else 0.0
    has_neg = bool(np.min(g) < 0.0)
    if not has_neg:
        flag = "markovian"
    elif min_running > 0.0:
        flag = "valid-non-markovian"
    else:
        flag = "invalid"
    return ValidityReport(flag, has_neg, float(np.min(g)), min_running, float(t))
