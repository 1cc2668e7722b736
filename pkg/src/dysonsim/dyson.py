"""Deterministic evaluation of the truncated dissipative series.

Two independent routes are provided:

* ``volterra_truncated`` iterates the integral recursion for the state on a
  uniform grid (trapezoid rule, interaction picture in the eigenbasis of H);
* ``dyson_expectation_exact`` integrates expectation values of adjoint
  operator chains over the time simplex with nested Gauss-Legendre rules.

Channel indices are 0-based throughout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tolerances as tol
from .errors import ConsistencyError, QuadratureError, ValidationError
from .linalg import as_square
from .oracle import EigenPropagator, evolve_unitary, heisenberg

VARIANTS = ("sandwich", "left", "right")


@dataclass(frozen=True)
class DissipatorTerm:
    """One of the elementary pieces a channel contributes at each order.

    Adjoint actions (times the rate gamma_i(s)):
    lindblad ``sandwich`` L^+ xi L (+1), ``left`` L^+L xi (-1/2), ``right`` xi L^+L (-1/2);
    anticommutator ``left`` G xi (-1), ``right`` xi G (-1).
    """

    channel: int
    variant: str
    weight: float


def dissipator_terms(model, channel: int) -> tuple[DissipatorTerm, ...]:
    kind = model.channels[channel].kind
    if kind == "lindblad":
        return (
            DissipatorTerm(channel, "sandwich", 1.0),
            DissipatorTerm(channel, "left", -0.5),
            DissipatorTerm(channel, "right", -0.5),
        )
    return (DissipatorTerm(channel, "left", -1.0), DissipatorTerm(channel, "right", -1.0))


def _left_right(model, term: DissipatorTerm, adjoint: bool):
    """Matrices (A, B) such that the term maps xi -> A xi B (None = identity)."""
    c = model.channels[term.channel]
    L = c.operator
    if c.kind == "lindblad":
        Ld = L.conj().T
        if term.variant == "sandwich":
            return (Ld, L) if adjoint else (L, Ld)
        LdL = Ld @ L
        return (LdL, None) if term.variant == "left" else (None, LdL)
    return (L, None) if term.variant == "left" else (None, L)


def apply_term(model, term: DissipatorTerm, xi, gamma, adjoint: bool = True) -> np.ndarray:
    """Apply one term to ``xi`` (shape (..., d, d)) scaled by ``weight * gamma``."""
    A, B = _left_right(model, term, adjoint)
    out = xi
    if A is not None:
        out = A @ out
    if B is not None:
        out = out @ B
    g = np.asarray(gamma, dtype=float)
    return (term.weight * g)[..., None, None] * out if g.ndim else term.weight * float(g) * out


def apply_dissipator(model, channel: int, xi, gamma, adjoint: bool = True) -> np.ndarray:
    out = 0
    for term in dissipator_terms(model, channel):
        out = out + apply_term(model, term, xi, gamma, adjoint)
    return out


@dataclass(frozen=True)
class AdjointChainSpec:
    """Channel word and descending times ``t >= s_1 >= ... >= s_n >= 0``."""

    word: tuple[int, ...]
    times: tuple[float, ...]
    observable: np.ndarray
    t: float

    def __post_init__(self):
        if len(self.word) != len(self.times):
            raise ValidationError("word and times must have equal length")
        seq = (self.t, *self.times, 0.0)
        if any(a < b for a, b in zip(seq, seq[1:])):
            raise ValidationError(f"times must satisfy t >= s_1 >= ... >= s_n >= 0, got {seq[:-1]}")

    @property
    def order(self) -> int:
        return len(self.word)


def build_adjoint_chain(spec: AdjointChainSpec, model) -> np.ndarray:
    """Nested adjoint operator for one channel word at fixed times."""
    for i in spec.word:
        if not 0 <= i < len(model.channels):
            raise ValidationError(f"channel index {i} out of range")
    H = model.hamiltonian
    X = as_square(spec.observable, "observable")
    prev = spec.t
    for i, s in zip(spec.word, spec.times):
        X = heisenberg(H, X, prev - s)
        X = apply_dissipator(model, i, X, model.channels[i].rate(s))
        prev = s
    return heisenberg(H, X, prev)


def adjoint_chain_expectations(model, rho0, observable, t: float, word: Sequence[int], times, prop=None) -> np.ndarray:
    """Batched ``Tr(rho0 A_word(s))`` for ``times`` of shape (B, n)."""
    prop = prop or EigenPropagator(model.hamiltonian)
    times = np.asarray(times, dtype=float)
    B = times.shape[0]
    X = np.broadcast_to(np.asarray(observable, dtype=np.complex128), (B, prop.dim, prop.dim))
    prev = np.full(B, float(t))
    for k, i in enumerate(word):
        s = times[:, k]
        X = prop.heisenberg(X, prev - s)
        X = apply_dissipator(model, i, X, model.channels[i].rate(s))
        prev = s
    X = prop.heisenberg(X, prev)
    return np.einsum("ij,bji->b", rho0, X)


def simplex_gauss_legendre(n: int, t: float, points: int) -> tuple[np.ndarray, np.ndarray]:
    """Iterated Gauss-Legendre rule on ``t >= s_1 >= ... >= s_n >= 0``.

    Returns nodes of shape (points**n, n) and matching weights.
    """
    x, w = np.polynomial.legendre.leggauss(points)
    u = 0.5 * (x + 1.0)
    nodes = np.zeros((1, 0))
    weights = np.ones(1)
    upper = np.full(1, float(t))
    for _ in range(n):
        s = (upper[:, None] * u[None, :]).ravel()
        weights = (weights[:, None] * (0.5 * upper[:, None]) * w[None, :]).ravel()
        nodes = np.concatenate([np.repeat(nodes, points, axis=0), s[:, None]], axis=1)
        upper = s
    return nodes, weights


def _dyson_order(model, rho0, O, t, n, points, prop, chunk=65536) -> complex:
    if n == 0:
        return complex(np.einsum("ij,ji->", rho0, prop.heisenberg(O, t)))
    nodes, weights = simplex_gauss_legendre(n, t, points)
    total = 0.0 + 0.0j
    for word in itertools.product(range(len(model.channels)), repeat=n):
        for lo in range(0, len(weights), chunk):
            vals = adjoint_chain_expectations(model, rho0, O, t, word, nodes[lo : lo + chunk], prop)
            total += complex(np.dot(weights[lo : lo + chunk], vals))
    return total


def dyson_expectation_exact(
    model,
    rho0,
    observable,
    t: float,
    n: int,
    quad_points: int = tol.GAUSS_NODES,
    check: bool = True,
    rtol: float = 1e-8,
) -> float:
    """Order-``n`` correction ``Tr[O rho_n(t)]`` by simplex quadrature.

    With ``check`` the result is recomputed with four fewer nodes per level
    and a ``QuadratureError`` is raised if the two disagree beyond ``rtol``.
    """
    if n < 0:
        raise ValidationError("order must be >= 0")
    if n > 4:
        raise ValidationError("orders above 4 are not supported by the quadrature path")
    rho0 = np.asarray(rho0, dtype=np.complex128)
    O = as_square(observable, "observable")
    prop = EigenPropagator(model.hamiltonian)
    val = _dyson_order(model, rho0, O, t, n, quad_points, prop)
    if check and n >= 1 and quad_points > 8:
        coarse = _dyson_order(model, rho0, O, t, n, quad_points - 4, prop)
        if abs(val - coarse) > rtol * max(1.0, abs(val)):
            raise QuadratureError(
                f"order {n} quadrature unconverged: |I({quad_points}) - I({quad_points - 4})| = {abs(val - coarse):.3e}"
            )
    if abs(val.imag) > 1e-8 * max(1.0, abs(val)) and np.allclose(O, O.conj().T):
        raise ConsistencyError(f"expectation of a Hermitian observable has imaginary part {val.imag:.3e}")
    return float(val.real)


def first_order_expanded(model, rho0, observable, t: float, quad_points: int = tol.GAUSS_NODES) -> float:
    """First-order correction written out as two-time correlation functions."""
    H = model.hamiltonian
    rho0 = np.asarray(rho0, dtype=np.complex128)
    O_t = heisenberg(H, observable, t)
    x, w = np.polynomial.legendre.leggauss(quad_points)
    nodes = 0.5 * t * (x + 1.0)
    weights = 0.5 * t * w
    total = 0.0 + 0.0j
    for c in model.channels:
        L = c.operator
        for s, ws in zip(nodes, weights):
            g = c.rate(s)
            if c.kind == "lindblad":
                L_s = heisenberg(H, L, s)
                LdL_s = heisenberg(H, L.conj().T @ L, s)
                val = np.trace(rho0 @ L_s.conj().T @ O_t @ L_s) - 0.5 * np.trace(
                    rho0 @ (O_t @ LdL_s + LdL_s @ O_t)
                )
            else:
                G_s = heisenberg(H, L, s)
                val = -np.trace(rho0 @ (O_t @ G_s + G_s @ O_t))
            total += ws * g * val
    return float(total.real)


@dataclass(frozen=True)
class VolterraResult:
    """Series terms ``rho_k(t)`` (k = 0..n) and a Richardson error estimate."""

    terms: tuple[np.ndarray, ...]
    error_estimate: float

    @property
    def truncated(self) -> np.ndarray:
        return sum(self.terms[1:], self.terms[0].copy())


def _forward_batch(model, Ls_e, X, s) -> np.ndarray:
    out = np.zeros_like(X)
    for i, c in enumerate(model.channels):
        g = np.asarray(c.rate(s), dtype=float)
        if not np.any(g):
            continue
        L = Ls_e[i]
        if c.kind == "lindblad":
            LdL = L.conj().T @ L
            val = L @ X @ L.conj().T - 0.5 * (LdL @ X + X @ LdL)
        else:
            val = -(L @ X + X @ L)
        out += g[:, None, None] * val
    return out


def _volterra_corrections(model, rho0_e, Ls_e, gaps, t, n, steps) -> list[np.ndarray]:
    """Interaction-picture corrections at time t, in the eigenbasis."""
    s = np.linspace(0.0, t, steps + 1)
    h = t / steps
    phase = np.exp(-1j * gaps[None, :, :] * s[:, None, None])  # U(s) X U(s)^+ elementwise
    level = np.broadcast_to(rho0_e, (steps + 1,) + rho0_e.shape)
    out = []
    for _ in range(n):
        F = np.conj(phase) * _forward_batch(model, Ls_e, phase * level, s)
        cum = np.zeros_like(F)
        cum[1:] = np.cumsum(0.5 * h * (F[1:] + F[:-1]), axis=0)
        level = cum
        out.append(phase[-1] * level[-1])
    return out


def volterra_series(model, rho0, t: float, n: int, grid_steps: int = tol.VOLTERRA_GRID_STEPS) -> VolterraResult:
    """Terms of the truncated series at time ``t`` from the integral recursion."""
    if n < 0:
        raise ValidationError("order must be >= 0")
    if grid_steps < 16:
        raise ValidationError("grid_steps must be >= 16")
    grid_steps += grid_steps % 2
    rho0 = as_square(rho0, "rho0")
    base = evolve_unitary(model.hamiltonian, rho0, t)
    if n == 0 or t == 0.0:
        zero = np.zeros_like(base)
        return VolterraResult((base,) + (zero,) * n, 0.0)
    prop = EigenPropagator(model.hamiltonian)
    gaps = prop.gaps()
    rho0_e = prop.to_eigenbasis(rho0)
    Ls_e = [prop.to_eigenbasis(c.operator) for c in model.channels]
    fine = _volterra_corrections(model, rho0_e, Ls_e, gaps, t, n, grid_steps)
    coarse = _volterra_corrections(model, rho0_e, Ls_e, gaps, t, n, grid_steps // 2)
    err = float(np.max(np.abs(sum(fine) - sum(coarse)))) / 3.0
    terms = [base] + [prop.from_eigenbasis(X) for X in fine]
    if all(c.kind == "lindblad" for c in model.channels):
        for k, X in enumerate(terms[1:], start=1):
            tr = abs(np.trace(X))
            if tr > 1e-10 * max(1.0, float(np.max(np.abs(X)))):
                raise ConsistencyError(f"series term {k} has trace {tr:.3e}; expected 0")
    return VolterraResult(tuple(terms), err)


def volterra_truncated(
    model, rho0, t: float, n: int, grid_steps: int = tol.VOLTERRA_GRID_STEPS, tolerance: float | None = None
) -> np.ndarray:
    """Truncated series ``sum_{k<=n} rho_k(t)``.

    Raises ``QuadratureError`` when the grid self-estimate exceeds ``tolerance``.
    """
    res = volterra_series(model, rho0, t, n, grid_steps)
    if tolerance is not None and res.error_estimate > tolerance:
        raise QuadratureError(
            f"trapezoid self-estimate {res.error_estimate:.3e} exceeds tolerance {tolerance:.3e}; increase grid_steps"
        )
    return res.truncated


def order_correction_from_states(model, rho0, observable, t: float, n: int, grid_steps: int = tol.VOLTERRA_GRID_STEPS) -> float:
    """``Tr[O (rho~_n - rho~_{n-1})]`` from the state recursion."""
    res = volterra_series(model, rho0, t, n, grid_steps)
    return float(np.trace(observable @ res.terms[n]).real)

