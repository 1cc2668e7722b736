"""Numerical tolerances used across the package.

Kept in one place so that tests and validation code agree on what
"equal" means.
"""

ALGEBRAIC = 1e-10
INTEGRATOR = 1e-8
HERMITIAN = 1e-10
PAULI_PRUNE = 1e-13
PSD_STATE = 1e-10
STIFFNESS = 1e-6
PROBABILITY = 1e-9

# dense sampling used for max|gamma| and (1/t)∫|gamma|
RATE_SAMPLES = 10_000

ORACLE_STEPS_PER_UNIT = 2000
VOLTERRA_GRID_STEPS = 4096
GAUSS_NODES = 24
