"""Counter-based random bits: (seed, round, stream) -> bits.

Every draw is addressed by its coordinates instead of by generator state,
so rounds can be produced in any order or in parallel and still agree.
"""

from __future__ import annotations

import numpy as np

# Stream ids keep the independent sources of a round apart.
GAINS = 0
ALICE = 1
BOB = 2
GAUSSIAN = 3

_MASK64 = (1 << 64) - 1


def generator(seed: int, index: int, stream: int = GAINS) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and positioned at ``(stream, index)``."""
    key = [seed & _MASK64, (seed >> 64) & _MASK64]
    counter = [0, 0, stream & _MASK64, index & _MASK64]
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def random_bits(seed: int, index: int, n_bits: int, stream: int = GAINS) -> int:
    """``n_bits`` uniform bits packed into an int (bit 0 first)."""
    if n_bits < 0:
        raise ValueError("n_bits must be >= 0")
    if n_bits == 0:
        return 0
    draws = generator(seed, index, stream).integers(0, 2, size=n_bits, dtype=np.uint8)
    out = 0
    for i, b in enumerate(draws.tolist()):
        out |= b << i
    return out
