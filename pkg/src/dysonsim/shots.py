"""Multi-time correlator chains over Pauli words and single-shot emulation.

A correlator chain is a product of Heisenberg-picture Pauli operators.  Its
expectation is the mean of a +/-1 Hadamard-test outcome (real part) and of a
second, independent +/-1 outcome (imaginary part); we sample those outcomes
directly from the exact means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tolerances as tol
from .dyson import AdjointChainSpec, dissipator_terms
from .errors import BudgetError, ConsistencyError, DimensionError, ValidationError
from .linalg import as_square, spectral_norm
from .model import Channel, LindbladModel, NonHermitianModel, normalize_lindblads
from .oracle import EigenPropagator, heisenberg
from .pauli import PauliDecomposition, decompose, embed_dimension, pauli_basis, qubits_for_dim
from .rng import as_generator


@dataclass(frozen=True)
class CorrelatorChain:
    """Product ``Q_{k_1}(tau_1) Q_{k_2}(tau_2) ...`` in left-to-right order."""

    qubits: int
    factors: tuple[tuple[int, float], ...]
    prefactor: complex = 1.0


def chain_operator(chain: CorrelatorChain, H) -> np.ndarray:
    basis = pauli_basis(chain.qubits)
    H = as_square(H, "hamiltonian")
    if H.shape[0] != basis.dim:
        raise DimensionError(f"hamiltonian dimension {H.shape[0]} does not match {chain.qubits} qubits")
    out = np.eye(basis.dim, dtype=np.complex128)
    for k, tau in chain.factors:
        out = out @ heisenberg(H, basis[k], tau)
    return out


def exact_chain_expectation(chain: CorrelatorChain, rho0, H) -> complex:
    """``Tr(rho0 B)`` for the unit-norm chain product ``B`` (prefactor excluded)."""
    B = chain_operator(chain, H)
    rho0 = as_square(rho0, "rho0")
    if rho0.shape != B.shape:
        raise DimensionError("rho0 does not match the chain dimension")
    val = complex(np.einsum("ij,ji->", rho0, B))
    if abs(val) > 1.0 + tol.ALGEBRAIC:
        raise ConsistencyError(f"|<B>| = {abs(val):.12g} exceeds 1 for a product of unitaries")
    return val


@dataclass(frozen=True)
class ShotOutcome:
    real_part: int
    imag_part: int
    sample_index: int | None = None
    stream_id: int | None = None


def _outcome_probabilities(expect) -> tuple[np.ndarray, np.ndarray]:
    e = np.asarray(expect)
    re, im = e.real, e.imag
    worst = max(float(np.max(np.abs(re), initial=0.0)), float(np.max(np.abs(im), initial=0.0)))
    if worst > 1.0 + tol.PROBABILITY:
        raise ConsistencyError(f"correlator component {worst:.12g} outside [-1, 1]")
    return np.clip(0.5 * (1.0 + re), 0.0, 1.0), np.clip(0.5 * (1.0 + im), 0.0, 1.0)


def draw_outcomes(expect, uniforms) -> tuple[np.ndarray, np.ndarray]:
    """+/-1 outcomes from uniforms of shape ``shape(expect) + (2,)``."""
    p_re, p_im = _outcome_probabilities(expect)
    r = np.where(uniforms[..., 0] < p_re, 1.0, -1.0)
    m = np.where(uniforms[..., 1] < p_im, 1.0, -1.0)
    return r, m


def single_shot(chain: CorrelatorChain, rho0, H, rng, sample_index: int | None = None) -> ShotOutcome:
    gen = as_generator(rng)
    e = exact_chain_expectation(chain, rho0, H)
    r, m = draw_outcomes(np.array(e), gen.random(2))
    stream = getattr(rng, "stream", None)
    return ShotOutcome(int(r), int(m), sample_index, stream)


@dataclass(frozen=True)
class Decompositions:
    observable: PauliDecomposition
    channels: tuple[PauliDecomposition, ...]

    @property
    def M(self) -> int:
        return max((d.support for d in self.channels), default=1)

    @property
    def M_O(self) -> int:
        return self.observable.support


def decompose_model(model, observable) -> Decompositions:
    return Decompositions(decompose(observable), tuple(decompose(c.operator) for c in model.channels))


@dataclass(frozen=True)
class ChainTemplate:
    """Time-free chain: factors are (Pauli index, level); level 0 is the
    observable time ``t`` and level k is ``s_k``."""

    factors: tuple[tuple[int, int], ...]
    coeff: complex
    variants: tuple[str, ...]


MAX_TEMPLATES = 200_000
_DRAW_CHUNK = 1 << 21


def template_count(model, word, decomps: Decompositions) -> int:
    count = decomps.M_O
    for i in word:
        m = decomps.channels[i].support
        count *= 3 * m * m if model.channels[i].kind == "lindblad" else 2 * m
    return count


def enumerate_templates(model, word, decomps: Decompositions) -> tuple[ChainTemplate, ...]:
    """Every dissipator-variant branch times every Pauli combination for ``word``."""
    count = template_count(model, word, decomps)
    if count > MAX_TEMPLATES:
        raise BudgetError(
            f"word {tuple(word)} expands into {count} correlator chains (limit {MAX_TEMPLATES}); "
            "use sparser Lindblad operators or a lower order"
        )
    current = [(((l, 0),), q, ()) for l, q in decomps.observable.terms]
    for level, i in enumerate(word, start=1):
        dec = decomps.channels[i]
        kind = model.channels[i].kind
        nxt = []
        for factors, c, var in current:
            for term in dissipator_terms(model, i):
                v = var + (term.variant,)
                if kind == "lindblad":
                    for a, qa in dec.terms:
                        for b, qb in dec.terms:
                            w = c * term.weight * qa.conjugate() * qb
                            pa, pb = (a, level), (b, level)
                            if term.variant == "sandwich":
                                nxt.append(((pa,) + factors + (pb,), w, v))
                            elif term.variant == "left":
                                nxt.append(((pa, pb) + factors, w, v))
                            else:
                                nxt.append((factors + (pa, pb), w, v))
                else:
                    for a, ga in dec.terms:
                        w = c * term.weight * ga
                        if term.variant == "left":
                            nxt.append((((a, level),) + factors, w, v))
                        else:
                            nxt.append((factors + ((a, level),), w, v))
        current = nxt
    return tuple(ChainTemplate(f, complex(c), v) for f, c, v in current)


def template_expectations(templates, times, t: float, rho0, prop: EigenPropagator, qubits: int) -> np.ndarray:
    """Exact chain expectations, shape (B, T), for sample times of shape (B, n)."""
    basis = pauli_basis(qubits)
    times = np.asarray(times, dtype=float)
    B = times.shape[0]
    ops: dict[tuple[int, int], np.ndarray] = {}
    for tpl in templates:
        for p, lvl in tpl.factors:
            if (p, lvl) not in ops:
                tau = t if lvl == 0 else times[:, lvl - 1]
                ops[(p, lvl)] = prop.heisenberg(basis[p], tau)
    out = np.empty((B, len(templates)), dtype=np.complex128)
    for j, tpl in enumerate(templates):
        prod = ops[tpl.factors[0]]
        for f in tpl.factors[1:]:
            prod = prod @ ops[f]
        out[:, j] = np.broadcast_to(np.einsum("ij,...ji->...", rho0, prod), (B,))
    return out


def rate_products(model, word, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    out = np.ones(times.shape[0])
    for k, i in enumerate(word):
        out = out * np.asarray(model.channels[i].rate(times[:, k]), dtype=float)
    return out


def shot_values(templates, expect, rates, uniforms) -> np.ndarray:
    """Real part of the aggregated single-shot estimate per sample."""
    r, m = draw_outcomes(expect, uniforms)
    coeff = np.array([tpl.coeff for tpl in templates])
    agg = (r * coeff.real - m * coeff.imag).sum(axis=1)
    return agg * rates


@dataclass(eq=False)
class Problem:
    """A model, state and observable prepared for sampling: rates normalized,
    dimension embedded to a power of two, Pauli decompositions attached."""

    model: object
    rho0: np.ndarray
    observable: np.ndarray
    t: float
    decomps: Decompositions
    prop: EigenPropagator
    qubits: int
    original_dim: int
    _templates: dict = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return len(self.model.channels)

    @property
    def gamma_bar(self) -> float:
        return max((c.rate.gamma_bar(self.t) for c in self.model.channels), default=0.0)

    @property
    def observable_norm(self) -> float:
        return spectral_norm(self.observable)

    def templates(self, word) -> tuple[ChainTemplate, ...]:
        word = tuple(int(i) for i in word)
        tpls = self._templates.get(word)
        if tpls is None:
            # setdefault keeps one copy when worker threads race on a new word
            tpls = self._templates.setdefault(word, enumerate_templates(self.model, word, self.decomps))
        return tpls

    def magnitude_bound(self, n: int) -> float:
        """Largest possible |single-shot A| at order n: 2 ||O|| sqrt(M_O) (2 gamma_bar M)^n."""
        return 2.0 * self.observable_norm * math.sqrt(self.decomps.M_O) * (2.0 * self.gamma_bar * self.decomps.M) ** n


def _embedded_model(model):
    if isinstance(model, NonHermitianModel):
        return NonHermitianModel(embed_dimension(model.hamiltonian), embed_dimension(model.gamma_op))
    chans = tuple(Channel(embed_dimension(c.operator), c.rate, c.kind) for c in model.lindblads)
    return LindbladModel(embed_dimension(model.hamiltonian), chans)


def prepare(model, rho0, observable, t: float) -> Problem:
    if isinstance(model, LindbladModel):
        model = normalize_lindblads(model)
    d = model.dim
    rho0 = as_square(rho0, "rho0")
    observable = as_square(observable, "observable")
    if rho0.shape != (d, d) or observable.shape != (d, d):
        raise DimensionError("rho0 and observable must match the model dimension")
    emb = _embedded_model(model)
    rho_e, O_e = embed_dimension(rho0), embed_dimension(observable)
    return Problem(
        model=emb,
        rho0=rho_e,
        observable=O_e,
        t=float(t),
        decomps=decompose_model(emb, O_e),
        prop=EigenPropagator(emb.hamiltonian),
        qubits=qubits_for_dim(emb.dim),
        original_dim=d,
    )


def check_magnitude(vals, bound):
    worst = float(np.max(np.abs(vals), initial=0.0))
    if worst > bound * (1.0 + 1e-9) + 1e-12:
        raise ConsistencyError(f"single-shot value {worst:.6g} exceeds the magnitude bound {bound:.6g}")


def sample_A_shots(spec: AdjointChainSpec, model, rho0, size: int, rng, problem: Problem | None = None) -> np.ndarray:
    """``size`` independent single-shot draws of A at fixed (word, times)."""
    problem = problem or prepare(model, rho0, spec.observable, spec.t)
    gen = as_generator(rng)
    tpls = problem.templates(spec.word)
    times = np.asarray(spec.times, dtype=float).reshape(1, -1)
    expect = template_expectations(tpls, times, spec.t, problem.rho0, problem.prop, problem.qubits)
    rates = rate_products(problem.model, spec.word, times)
    T = len(tpls)
    chunk = max(1, _DRAW_CHUNK // T)
    parts = []
    for lo in range(0, size, chunk):
        m = min(chunk, size - lo)
        parts.append(shot_values(tpls, np.broadcast_to(expect, (m, T)), np.broadcast_to(rates, (m,)), gen.random((m, T, 2))))
    vals = np.concatenate(parts) if parts else np.zeros(0)
    check_magnitude(vals, problem.magnitude_bound(spec.order))
    return vals


def single_shot_A(spec: AdjointChainSpec, model, rho0, rng, problem: Problem | None = None) -> float:
    """One single-shot realization of ``A_word(times)`` (real part)."""
    return float(sample_A_shots(spec, model, rho0, 1, rng, problem)[0])


def chains_for_spec(spec: AdjointChainSpec, problem: Problem) -> list[CorrelatorChain]:
    """Concrete chains (with times and full prefactors) behind one spec."""
    tpls = problem.templates(spec.word)
    rates = float(rate_products(problem.model, spec.word, np.asarray([spec.times]).reshape(1, -1))[0])
    taus = (spec.t, *spec.times)
    return [
        CorrelatorChain(problem.qubits, tuple((p, taus[lvl]) for p, lvl in tpl.factors), tpl.coeff * rates)
        for tpl in tpls
    ]


def validate_word_indices(word, N: int):
    for i in word:
        if not 0 <= i < N:
            raise ValidationError(f"channel index {i} out of range for {N} channels")
