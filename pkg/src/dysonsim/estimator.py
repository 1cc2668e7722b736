"""Monte Carlo estimation of the truncated series.

Each order-n correction is the simplex integral of adjoint-chain expectations
summed over channel words.  We draw (word, times) pairs uniformly, average the
chain values (exact means or emulated single shots) and scale by
``(N t)^n / n!``, the number of words times the simplex volume.

Samples are generated in fixed-size blocks; block ``b`` draws from its own
counter-based stream, so the partition across workers never changes the
numbers.  Per-sample values are concatenated in index order before a single
pairwise ``np.sum``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds
from .dyson import adjoint_chain_expectations, dyson_expectation_exact
from .errors import BudgetError, ValidationError
from .linalg import as_square
from .oracle import evolve_unitary
from .rng import RngStream, as_generator
from .shots import Problem, check_magnitude, prepare, rate_products, shot_values, template_expectations

MODES = ("shots", "exact-mean", "deterministic-quadrature")
BLOCK_SIZE = 4096
_SHOT_CHUNK = 1 << 20


def sample_time_simplex(n: int, t: float, rng, size: int | None = None) -> np.ndarray:
    """Descending times ``t >= s_1 >= ... >= s_n >= 0``, uniform on the simplex.

    Shape ``(n,)`` or ``(size, n)``.
    """
    if n < 0:
        raise ValidationError("n must be >= 0")
    if t < 0:
        raise ValidationError("t must be >= 0")
    gen = as_generator(rng)
    u = gen.random((1 if size is None else size, n)) * t
    s = -np.sort(-u, axis=1)
    return s[0] if size is None else s


def sample_channel_word(n: int, N: int, rng, size: int | None = None) -> np.ndarray:
    """i.i.d. uniform 0-based channel indices, shape ``(n,)`` or ``(size, n)``."""
    if N < 1:
        raise ValidationError("N must be >= 1")
    gen = as_generator(rng)
    w = gen.integers(0, N, size=(1 if size is None else size, n))
    return w[0] if size is None else w


@dataclass(frozen=True)
class SamplingBudget:
    order: int
    delta: float
    beta: float
    samples: int
    bernstein_applicable: bool = True

    def __post_init__(self):
        if self.order < 0:
            raise BudgetError("order must be >= 0")
        if self.samples < 1:
            raise BudgetError("sample count must be >= 1")
        if not self.delta > 0:
            raise BudgetError("delta must be positive")
        if not self.beta > 0:
            raise BudgetError("beta must be positive")

    @classmethod
    def for_delta(cls, inputs: bounds.BoundInputs, n: int, delta: float, beta: float) -> "SamplingBudget":
        """Sample count from the Bernstein formula.

        A delta above the worst-case order magnitude is clipped to it, which
        only raises the sample count.
        """
        cap = bounds.worst_case_order(inputs, n)
        eff = min(delta, cap) if cap > 0 else delta
        return cls(n, delta, beta, bounds.required_samples(inputs, n, eff, beta, check_precondition=False))

    @classmethod
    def for_samples(cls, inputs: bounds.BoundInputs, n: int, samples: int, beta: float) -> "SamplingBudget":
        """Delta guaranteed by a fixed sample count (inverse of the formula)."""
        delta = bounds.delta_for_samples(inputs, n, samples, beta)
        if delta == 0.0:
            return cls(n, math.ulp(1.0), beta, samples)
        return cls(n, delta, beta, samples, delta <= bounds.worst_case_order(inputs, n) * (1 + 1e-12))


def split_budgets(inputs: bounds.BoundInputs, K: int, epsilon: float, c: float = 0.5, beta: float = 2.0):
    """Budgets for orders 1..K with delta_n = (1 - c) epsilon / (K + 1)."""
    if not 0.0 < c < 1.0:
        raise ValidationError("c must lie in (0, 1)")
    delta = (1.0 - c) * epsilon / (K + 1)
    return tuple(SamplingBudget.for_delta(inputs, n, delta, beta) for n in range(1, K + 1))


@dataclass(frozen=True)
class OrderEstimate:
    order: int
    mode: str
    value: float
    stderr: float
    samples: int
    prefactor: float
    chain_evaluations: int
    delta: float | None = None
    beta: float | None = None

    @property
    def shots_one_per_chain(self) -> int:
        """Repetitions if the real and imaginary shot of a chain share one run."""
        return self.chain_evaluations if self.mode == "shots" else 0

    @property
    def shots_two_per_chain(self) -> int:
        return 2 * self.shots_one_per_chain

    @property
    def protocol_count(self) -> int:
        """3^n |Omega_n|, the count used in the measurement-scaling bound."""
        return 3**self.order * self.samples


def _word_groups(words: np.ndarray):
    if words.shape[1] == 0:
        yield (), np.arange(words.shape[0])
        return
    uniq, inv = np.unique(words, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    for k, w in enumerate(uniq):
        yield tuple(int(i) for i in w), np.nonzero(inv == k)[0]


def _block_values(problem: Problem, n: int, mode: str, stream: RngStream, block: int, count: int):
    gen = stream.block(block)
    times = sample_time_simplex(n, problem.t, gen, size=count)
    words = sample_channel_word(n, max(problem.N, 1), gen, size=count)
    vals = np.empty(count)
    chains = 0
    for word, idx in _word_groups(words):
        tt = times[idx]
        if mode == "exact-mean":
            vals[idx] = adjoint_chain_expectations(
                problem.model, problem.rho0, problem.observable, problem.t, word, tt, problem.prop
            ).real
            continue
        tpls = problem.templates(word)
        T = len(tpls)
        rates = rate_products(problem.model, word, tt)
        step = max(1, _SHOT_CHUNK // T)
        for lo in range(0, len(idx), step):
            sel = slice(lo, lo + step)
            expect = template_expectations(tpls, tt[sel], problem.t, problem.rho0, problem.prop, problem.qubits)
            m = expect.shape[0]
            vals[idx[sel]] = shot_values(tpls, expect, rates[sel], gen.random((m, T, 2)))
        chains += T * len(idx)
    if mode == "shots":
        check_magnitude(vals, problem.magnitude_bound(n))
    return vals, chains


def default_workers() -> int:
    raw = os.environ.get("DYSONSIM_WORKERS", "1")
    try:
        w = int(raw)
    except ValueError:
        raise ValidationError(f"DYSONSIM_WORKERS must be an integer, got {raw!r}") from None
    if w < 1:
        raise ValidationError("DYSONSIM_WORKERS must be >= 1")
    return w


def _as_stream(seed_or_stream) -> RngStream:
    if isinstance(seed_or_stream, RngStream):
        return seed_or_stream
    return RngStream(int(seed_or_stream))


def sample_values(problem: Problem, n: int, samples: int, mode: str, stream, workers: int | None = None):
    """Per-sample A values (index order) and the number of chains evaluated."""
    if mode not in ("shots", "exact-mean"):
        raise ValidationError(f"sampling mode must be 'shots' or 'exact-mean', got {mode!r}")
    stream = _as_stream(stream)
    workers = default_workers() if workers is None else int(workers)
    nblocks = -(-samples // BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, samples - b * BLOCK_SIZE) for b in range(nblocks)]

    def run(b):
        return _block_values(problem, n, mode, stream, b, sizes[b])

    if workers == 1 or nblocks <= 1:
        parts = [run(b) for b in range(nblocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(nblocks)))
    vals = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0)
    return vals, sum(p[1] for p in parts)


def estimate_order(
    model,
    rho0,
    observable,
    t: float,
    budget: SamplingBudget,
    mode: str = "exact-mean",
    stream=0,
    order: int | None = None,
    workers: int | None = None,
    problem: Problem | None = None,
) -> OrderEstimate:
    """Order-``n`` correction Tr[O rho_n(t)] as ``(N t)^n / (n! |Omega|) sum A``."""
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")
    n = budget.order
    if order is not None and order != n:
        raise BudgetError(f"budget is for order {n}, requested order {order}")
    problem = problem or prepare(model, rho0, observable, t)
    N = problem.N
    prefactor = 1.0 if n == 0 else (math.exp(n * math.log(N * t) - math.lgamma(n + 1)) if N * t > 0 else 0.0)

    if mode == "deterministic-quadrature":
        val = dyson_expectation_exact(problem.model, problem.rho0, problem.observable, t, n)
        return OrderEstimate(n, mode, val, 0.0, 0, prefactor, 0, budget.delta, budget.beta)
    if prefactor == 0.0:
        return OrderEstimate(n, mode, 0.0, 0.0, budget.samples, prefactor, 0, budget.delta, budget.beta)
    vals, chains = sample_values(problem, n, budget.samples, mode, stream, workers)
    m = len(vals)
    mean = float(np.sum(vals)) / m
    sd = float(np.std(vals, ddof=1)) if m > 1 else 0.0
    return OrderEstimate(n, mode, prefactor * mean, prefactor * sd / math.sqrt(m), m, prefactor, chains, budget.delta, budget.beta)


@dataclass(frozen=True)
class EstimateReport:
    t: float
    mode: str
    seed: int
    orders: tuple[OrderEstimate, ...]
    total: float
    truncation: bounds.TruncationBound
    observable_bound: float
    observable_norm: float
    failure_probability: float
    oracle_value: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.orders) - 1

    @property
    def cumulative(self) -> list[float]:
        return list(np.cumsum([o.value for o in self.orders]))

    @property
    def delta_total(self) -> float:
        return float(sum(o.delta or 0.0 for o in self.orders[1:] if o.samples))

    @property
    def tallies(self) -> dict[str, int]:
        return {
            "chains_one_repetition": sum(o.shots_one_per_chain for o in self.orders),
            "chains_two_repetitions": sum(o.shots_two_per_chain for o in self.orders),
            "protocol_count": sum(o.protocol_count for o in self.orders if o.samples),
            "samples": sum(o.samples for o in self.orders),
        }


def order_zero(problem: Problem) -> float:
    rho_t = evolve_unitary(problem.model.hamiltonian, problem.rho0, problem.t)
    return float(np.einsum("ij,ji->", problem.observable, rho_t).real)


def estimate_observable(
    model,
    rho0,
    observable,
    t: float,
    K: int,
    budgets=None,
    mode: str = "exact-mean",
    seed: int = 0,
    workers: int | None = None,
    oracle_value: float | None = None,
    stream_id: int = 0,
) -> EstimateReport:
    """Truncated-series estimate of <O(t)> with orders 0..K.

    ``budgets`` lists one ``SamplingBudget`` per order 1..K; an extra entry
    for order 0 is used only in ``shots`` mode, where order 0 is sampled too.
    """
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")
    if K < 0:
        raise ValidationError("K must be >= 0")
    O = as_square(observable, "observable")
    problem = prepare(model, rho0, O, t)
    inputs = bounds.BoundInputs.from_model(problem.model, problem.observable, t)
    by_order = {b.order: b for b in (budgets or ())}
    missing = [n for n in range(1, K + 1) if n not in by_order] if mode != "deterministic-quadrature" else []
    if missing:
        raise BudgetError(f"no sampling budget for orders {missing}")
    root = RngStream(int(seed), int(stream_id))

    orders = []
    if mode == "shots" and 0 in by_order:
        orders.append(estimate_order(None, None, None, t, by_order[0], mode, root.child(0), workers=workers, problem=problem))
    else:
        orders.append(OrderEstimate(0, "deterministic", order_zero(problem), 0.0, 0, 1.0, 0))
    for n in range(1, K + 1):
        b = by_order.get(n) or SamplingBudget(n, 1.0, 1.0, 1)
        orders.append(estimate_order(None, None, None, t, b, mode, root.child(n), workers=workers, problem=problem))

    sampled = [o for o in orders if o.samples and o.beta]
    return EstimateReport(
        t=float(t),
        mode=mode,
        seed=int(seed),
        orders=tuple(orders),
        total=float(sum(o.value for o in orders)),
        truncation=bounds.truncation_bound(inputs, K),
        observable_bound=bounds.observable_truncation_bound(inputs, problem.observable, problem.model, K)
        if inputs.N
        else 0.0,
        observable_norm=problem.observable_norm,
        failure_probability=float(sum(math.exp(-o.beta) for o in sampled)),
        oracle_value=oracle_value,
    )
