"""Counter-based random streams.

Every draw is addressed by ``(seed, stream, counter)`` through numpy's Philox
generator, so any block of samples can be regenerated on any worker without
coordination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetError

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= _U64:
            raise BudgetError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not 0 <= self.stream <= _U64:
            raise BudgetError(f"stream id must be an unsigned 64-bit integer, got {self.stream}")

    @property
    def key(self) -> int:
        return self.seed | (self.stream << 64)

    def _generator(self, kind: int, index: int) -> np.random.Generator:
        if not 0 <= index <= _U64:
            raise BudgetError(f"counter {index} exhausted the 64-bit counter space")
        return np.random.Generator(np.random.Philox(key=self.key, counter=[0, 0, kind, index]))

    def block(self, index: int) -> np.random.Generator:
        """Generator for sample block ``index``."""
        return self._generator(1, index)

    def sample(self, index: int) -> np.random.Generator:
        """Generator for a single sample ``index``."""
        return self._generator(0, index)

    def child(self, *ids: int) -> "RngStream":
        """Deterministic sub-stream labelled by integer ``ids``."""
        state = np.random.SeedSequence([self.stream, *ids]).generate_state(2, np.uint64)
        sub = (int(state[0]) ^ (int(state[1]) << 1)) & _U64
        return RngStream(self.seed, sub)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.sample(0)
    return np.random.default_rng(rng)
