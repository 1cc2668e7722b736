"""Closed-form error bounds, sample budgets and truncation-order selection.

Powers and factorials go through ``log``/``lgamma`` so orders up to ~20 and
dimensionless times of a few units never overflow.  All rates are assumed to
multiply unit-norm channel operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .errors import BudgetError, ValidationError
from .linalg import as_square, spectral_norm
from .model import NonHermitianModel, RateFunction
from .pauli import decompose, embed_dimension


def _power_over_factorial(base: float, n: int) -> float:
    """``base**n / n!`` for base >= 0."""
    if n == 0:
        return 1.0
    if base == 0.0:
        return 0.0
    return math.exp(n * math.log(base) - math.lgamma(n + 1))


@dataclass(frozen=True)
class BoundInputs:
    N: int
    gamma_bar: float
    mean_abs: tuple[float, ...]
    M: int
    M_O: int
    t: float

    def __post_init__(self):
        if self.N < 0 or self.M < 1 or self.M_O < 1:
            raise ValidationError("N must be >= 0 and M, M_O >= 1")
        if self.gamma_bar < 0 or self.t < 0 or any(m < 0 for m in self.mean_abs):
            raise ValidationError("rates and time must be nonnegative")
        if len(self.mean_abs) != self.N:
            raise ValidationError("mean_abs needs one entry per channel")

    @classmethod
    def simple(cls, N: int = 1, gamma_bar: float = 1.0, t: float = 1.0, M: int = 1, M_O: int = 1) -> "BoundInputs":
        """Constant rates equal to ``gamma_bar`` on every channel."""
        return cls(N, gamma_bar, (gamma_bar,) * N, M, M_O, t)

    @classmethod
    def from_model(cls, model, observable, t: float) -> "BoundInputs":
        chans = model.channels
        for i, c in enumerate(chans):
            if abs(spectral_norm(c.operator) - 1.0) > 1e-9:
                raise ValidationError(f"channel {i} is not normalized; call normalize_lindblads first")
        M = max((decompose(embed_dimension(c.operator)).support for c in chans), default=1)
        M_O = decompose(embed_dimension(observable)).support
        return cls(
            N=len(chans),
            gamma_bar=max((c.rate.gamma_bar(t) for c in chans), default=0.0),
            mean_abs=tuple(c.rate.mean_abs(t) for c in chans),
            M=max(M, 1),
            M_O=max(M_O, 1),
            t=float(t),
        )

    @property
    def t_bar(self) -> float:
        return self.gamma_bar * self.N * self.t


@dataclass(frozen=True)
class TruncationBound:
    mean_abs: float
    coarse: float


def truncation_bound(inputs: BoundInputs, n: int) -> TruncationBound:
    """Trace-distance bound after keeping orders 0..n.

    ``mean_abs``: (2 sum_i <|gamma_i|>)^(n+1) t^(n+1) / (2 (n+1)!)
    ``coarse``:   (2 gamma_bar N t)^(n+1) / (2 (n+1)!)
    """
    if n < 0:
        raise ValidationError("order must be >= 0")
    tight = 0.5 * _power_over_factorial(2.0 * sum(inputs.mean_abs) * inputs.t, n + 1)
    coarse = 0.5 * _power_over_factorial(2.0 * inputs.t_bar, n + 1)
    return TruncationBound(tight, coarse)


def dissipator_adjoint_norm(model, observable, t: float) -> float:
    """max over s in [0, t] of ||L_D(s)^+ O||_inf."""
    O = as_square(observable, "observable")
    chans = model.channels
    if not chans:
        return 0.0
    unit = [c.adjoint(O, 1.0) for c in chans]
    if all(c.rate.kind == "constant" for c in chans):
        return spectral_norm(sum(c.rate.value * A for c, A in zip(chans, unit)))
    grid = np.unique(np.concatenate([c.rate.sample_grid(t) for c in chans]))
    rates = np.array([c.rate(grid) for c in chans])
    stack = np.einsum("ig,ijk->gjk", rates, np.array(unit))
    return float(np.max(np.linalg.norm(stack, ord=2, axis=(1, 2))))


def observable_truncation_bound(inputs: BoundInputs, observable, model, n: int) -> float:
    """(||L_D^+ O|| / ||O||) (2 gamma_bar N)^n t^(n+1) / (2 (n+1)!)."""
    nrm = spectral_norm(observable)
    if nrm == 0.0:
        raise ValidationError("observable is zero")
    ratio = dissipator_adjoint_norm(model, observable, inputs.t) / nrm
    if n < 0:
        raise ValidationError("order must be >= 0")
    if inputs.t == 0.0:
        return 0.0
    # (2 gamma_bar N)^n t^(n+1) / (n+1)! = t * (2 gamma_bar N t)^n / (n+1)!
    return 0.5 * ratio * inputs.t * _power_over_factorial(2.0 * inputs.t_bar, n) / (n + 1)


def worst_case_order(inputs: BoundInputs, n: int) -> float:
    """(2 gamma_bar N t)^n / n!, the largest meaningful per-order error."""
    return _power_over_factorial(2.0 * inputs.t_bar, n)


def sample_formula(inputs: BoundInputs, n: int, delta: float, beta: float) -> float:
    """36 M_O^2 (2+beta) (2 gamma_bar M N t)^(2n) / (n!^2 delta^2), unrounded."""
    if delta <= 0:
        raise BudgetError("delta must be positive")
    if beta < 0:
        raise BudgetError("beta must be nonnegative")
    x = 2.0 * inputs.gamma_bar * inputs.M * inputs.N * inputs.t
    if n > 0 and x == 0.0:
        return 0.0
    log_terms = 2 * n * math.log(x) if n > 0 else 0.0
    return math.exp(
        math.log(36.0) + 2 * math.log(inputs.M_O) + math.log(2.0 + beta) - 2 * math.log(delta)
        + log_terms - 2 * math.lgamma(n + 1)
    )


def required_samples(inputs: BoundInputs, n: int, delta: float, beta: float, check_precondition: bool = True) -> int:
    """Smallest integer strictly above the Bernstein sample formula.

    A formula value within 1e-9 (relative) of an integer is treated as that
    integer, so round-off in ``delta**2`` cannot drop the count by one.
    """
    if n < 0:
        raise ValidationError("order must be >= 0")
    if check_precondition:
        cap = worst_case_order(inputs, n)
        if delta > cap * (1.0 + 1e-12):
            raise BudgetError(
                f"delta_{n} = {delta:g} exceeds (2 gamma_bar N t)^n / n! = {cap:g}; "
                "the Bernstein concentration bound does not apply"
            )
    val = sample_formula(inputs, n, delta, beta)
    k = round(val)
    if abs(val - k) <= 1e-9 * max(1.0, val):
        return int(k) + 1
    return math.floor(val) + 1


def delta_for_samples(inputs: BoundInputs, n: int, samples: int, beta: float) -> float:
    """Invert the sample formula: the delta that ``samples`` draws guarantee."""
    if samples < 1:
        raise BudgetError("sample count must be >= 1")
    return math.sqrt(sample_formula(inputs, n, 1.0, beta) / samples)


def truncation_order(inputs: BoundInputs, eps_prime: float) -> int:
    """K = ceil(2e t_bar + ln(1/(2 eps')) - 1), floored at 0 and raised until
    the coarse truncation bound at K is <= eps'."""
    if not 0.0 < eps_prime < 1.0:
        raise ValidationError("eps' must lie in (0, 1)")
    K = max(0, math.ceil(2.0 * math.e * inputs.t_bar + math.log(1.0 / (2.0 * eps_prime)) - 1.0))
    while truncation_bound(inputs, K).coarse > eps_prime:
        K += 1
    return K


@dataclass(frozen=True)
class MeasurementTotals:
    exact_sum: int
    closed_form: float
    K: int
    samples: tuple[int, ...]
    delta: float


def total_measurements(inputs: BoundInputs, epsilon: float, c: float = 0.5, beta: float = 2.0) -> MeasurementTotals:
    """Sum over n <= K of 3^n |Omega_n| with eps' = c eps and delta_n = (1-c) eps / (K+1)."""
    if not 0.0 < c < 1.0:
        raise ValidationError("c must lie in (0, 1)")
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    K = truncation_order(inputs, c * epsilon)
    delta = (1.0 - c) * epsilon / (K + 1)
    samples = tuple(required_samples(inputs, n, delta, beta, check_precondition=False) for n in range(K + 1))
    exact = sum(3**n * s for n, s in enumerate(samples))
    closed = (
        36.0 * inputs.M_O**2 * (2.0 + beta) * (1 + K) ** 2 / ((1.0 - c) ** 2 * epsilon**2)
        * math.exp(12.0 * inputs.gamma_bar * inputs.N * inputs.M * inputs.t)
    )
    return MeasurementTotals(exact, closed, K, samples, delta)


def _breakpoints(rate: RateFunction, t: float) -> list[float]:
    """Kinks of |gamma| inside (0, t): table knots and sinusoid zeros."""
    if rate.kind == "tabulated":
        pts = np.asarray(rate.grid, dtype=float)
    elif rate.kind == "sinusoid" and rate.omega != 0.0:
        ends = (rate.phase, rate.omega * t + rate.phase)
        ks = np.arange(math.floor(min(ends) / math.pi), math.ceil(max(ends) / math.pi) + 1)
        pts = (ks * math.pi - rate.phase) / rate.omega
    else:
        return []
    return sorted(float(p) for p in pts if 0.0 < p < t)


def rate_moment(rate: RateFunction, t: float, n: int) -> float:
    """integral_0^t |gamma(s)| s^n ds by adaptive quadrature."""
    val, _ = scipy.integrate.quad(
        lambda s: abs(float(rate(s))) * s**n, 0.0, t, points=_breakpoints(rate, t) or None, limit=500, epsabs=1e-14
    )
    return float(val)


def holder_rate_bounds(rate: RateFunction, t: float, n: int) -> float:
    """min( sqrt(int gamma^2) sqrt(t^(2n+1)/(2n+1)), max|gamma| t^(n+1)/(n+1) )."""
    if t <= 0:
        raise ValidationError("t must be positive")
    l2 = math.sqrt(rate.integral_sq(t)) * math.sqrt(t ** (2 * n + 1) / (2 * n + 1))
    sup = rate.gamma_bar(t) * t ** (n + 1) / (n + 1)
    return min(l2, sup)


def non_hermitian_truncation_bound(model: NonHermitianModel, t: float, n: int) -> float:
    """Trace-distance bound (2 ||Gamma|| t)^(n+1) / (2 (n+1)!) for PSD Gamma.

    Each order is bounded by (2 ||Gamma|| t)^k / k! in trace norm because
    {Gamma, .} has trace-norm gain at most 2 ||Gamma||; the remainder carries
    the full non-Hermitian propagator, which does not increase trace norm.
    """
    if not model.gamma_is_psd:
        raise ValidationError("the bound requires a positive semidefinite Gamma")
    return 0.5 * _power_over_factorial(2.0 * spectral_norm(model.gamma_op) * t, n + 1)
