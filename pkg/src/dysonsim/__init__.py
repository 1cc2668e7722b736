"""Open-system observables from unitary evolution plus a sampled dissipative series."""

from .bounds import (
    BoundInputs,
    holder_rate_bounds,
    non_hermitian_truncation_bound,
    observable_truncation_bound,
    required_samples,
    total_measurements,
    truncation_bound,
    truncation_order,
)
from .dyson import (
    AdjointChainSpec,
    build_adjoint_chain,
    dyson_expectation_exact,
    volterra_series,
    volterra_truncated,
)
from .errors import (
    BudgetError,
    ConsistencyError,
    DimensionError,
    DysonSimError,
    QuadratureError,
    RangeError,
    StiffnessError,
    ValidationError,
)
from .estimator import (
    EstimateReport,
    OrderEstimate,
    SamplingBudget,
    estimate_observable,
    estimate_order,
    sample_channel_word,
    sample_time_simplex,
)
from .linalg import matexp, spectral_norm, trace_norm
from .model import (
    Channel,
    LindbladModel,
    NonHermitianModel,
    RateFunction,
    check_nonmarkovian_validity,
    density_matrix,
    normalize_lindblads,
)
from .oracle import evolve_unitary, heisenberg, integrate_master, integrate_non_hermitian, trace_distance
from .pauli import PauliDecomposition, decompose, pauli_basis, pauli_matrix
from .rng import RngStream
from .shots import CorrelatorChain, ShotOutcome, exact_chain_expectation, single_shot, single_shot_A

__all__ = [name for name in dir() if not name.startswith("_")]
