"""Deterministic channel layer: gains, reciprocity, channel application, Eve."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from . import rng
from .gf2lin import BitVec, LtToeplitz, mat_vec, truncate


class GainMode(enum.Enum):
    STATIC = "static"
    RANDOM = "random"


class Coherence(enum.Enum):
    EVERY_ROUND = "every-round"
    NEVER = "never"


@dataclass(frozen=True)
class GainRealization:
    """A channel gain split as ``2**coarse_levels * 1.h_1 h_2 ...``.

    ``fine_bits`` holds ``h_1, h_2, ...``; the leading one of the fine gain
    is implied and never stored.
    """

    coarse_levels: int
    fine_bits: tuple[int, ...]

    def full_column(self) -> BitVec:
        return BitVec.from_bits((1, *self.fine_bits))

    @property
    def fine_gain(self) -> float:
        return 1.0 + sum(b * 2.0 ** -(i + 1) for i, b in enumerate(self.fine_bits))

    @property
    def magnitude(self) -> float:
        return 2.0**self.coarse_levels * self.fine_gain


@dataclass(frozen=True)
class ChannelTopology:
    """Bit levels per link.

    ``n_a``: Alice to Bob, ``n_b``: Bob to Alice, ``n_1``: Alice to Eve,
    ``n_2``: Bob to Eve.  ``legit_mode`` selects random fine gains or the
    identity on the Alice/Bob links; ``eve_mode`` does the same for Eve.
    """

    n_a: int
    n_b: int
    n_1: int
    n_2: int
    eve_mode: GainMode = GainMode.STATIC
    legit_mode: GainMode = GainMode.RANDOM

    def __post_init__(self):
        for name in ("n_a", "n_b", "n_1", "n_2"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        m = self.common
        if self.n_1 > m or self.n_2 > m:
            raise ValueError(
                f"Eve levels (n_1={self.n_1}, n_2={self.n_2}) must not exceed "
                f"min(n_a, n_b) = {m}"
            )
        object.__setattr__(self, "eve_mode", GainMode(self.eve_mode))
        object.__setattr__(self, "legit_mode", GainMode(self.legit_mode))

    @property
    def common(self) -> int:
        """Levels shared by both legitimate links, ``min(n_a, n_b)``."""
        return min(self.n_a, self.n_b)

    @property
    def eve_common(self) -> int:
        return min(self.n_1, self.n_2)

    def gain_bits(self) -> int:
        """Free random bits needed to draw one round of gains."""
        bits = 0
        if self.legit_mode is GainMode.RANDOM:
            bits += self.n_a - 1 + self.n_b - self.common
        if self.eve_mode is GainMode.RANDOM:
            bits += self.n_1 - 1 + self.n_2 - 1
        return bits


@dataclass(frozen=True)
class RoundGains:
    """Gain matrices of one communication round.

    ``fine`` is the shared part of the Alice/Bob fine gain (``common - 1``
    bits, possibly none).
    """

    fine: tuple[int, ...]
    k_matrix: LtToeplitz
    k_prime_matrix: LtToeplitz
    eve1: LtToeplitz
    eve2: LtToeplitz


def snr_to_levels(snr: float, complex_model: bool = False) -> int:
    """Bit levels above the noise floor, ``ceil(log2(snr) / 2)^+``."""
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr!r}")
    log = math.log2(snr)
    if not complex_model:
        log /= 2
    return max(0, math.ceil(log))


def quantize_gain(h: float, levels: int) -> GainRealization:
    """Split a normalized gain ``h >= 1`` into coarse level count and fine bits.

    The fine gain ``h / 2**floor(log2 h)`` is expanded to ``levels - 1``
    fractional bits; the coarse count is capped at ``levels``.
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    if not h >= 1:
        raise ValueError(f"gain magnitude must be normalized to >= 1, got {h!r}")
    exponent = math.frexp(h)[1] - 1
    mantissa = math.ldexp(h, -exponent) - 1.0
    bits = []
    for _ in range(levels - 1):
        mantissa *= 2
        bit = int(mantissa >= 1.0)
        bits.append(bit)
        mantissa -= bit
    return GainRealization(min(exponent, levels), tuple(bits))


def _bits(value: int, n: int) -> tuple[int, ...]:
    return tuple((value >> i) & 1 for i in range(n))


def gain_words(topology: ChannelTopology, word):
    """First columns ``(K, K', H_1, H_2)`` as packed words from random bits.

    ``word`` holds ``topology.gain_bits()`` bits, low to high: shared fine
    bits, extra bits of K, extra bits of K', then Eve's fine bits for H_1
    and H_2.  Works elementwise on numpy ``uint64`` arrays; static links
    come back as the scalar 1 (identity).
    """
    t = topology
    m = t.common
    k = kp = h1 = h2 = 1
    if t.legit_mode is GainMode.RANDOM:
        shared = word & ((1 << (m - 1)) - 1)
        word = word >> (m - 1)
        k_extra = word & ((1 << (t.n_a - m)) - 1)
        word = word >> (t.n_a - m)
        kp_extra = word & ((1 << (t.n_b - m)) - 1)
        word = word >> (t.n_b - m)
        k = 1 | (shared << 1) | (k_extra << m)
        kp = 1 | (shared << 1) | (kp_extra << m)
    if t.eve_mode is GainMode.RANDOM:
        e1 = word & ((1 << (t.n_1 - 1)) - 1)
        word = word >> (t.n_1 - 1)
        e2 = word & ((1 << (t.n_2 - 1)) - 1)
        h1 = 1 | (e1 << 1)
        h2 = 1 | (e2 << 1)
    return k, kp, h1, h2


def gains_from_bits(topology: ChannelTopology, word: int) -> RoundGains:
    """Build a round's gains from ``topology.gain_bits()`` packed random bits."""
    t = topology
    k, kp, h1, h2 = gain_words(t, word)
    fine = _bits(k >> 1, t.common - 1)
    return RoundGains(
        fine,
        LtToeplitz(BitVec(t.n_a, k)),
        LtToeplitz(BitVec(t.n_b, kp)),
        LtToeplitz(BitVec(t.n_1, h1)),
        LtToeplitz(BitVec(t.n_2, h2)),
    )


def sample_round_gains(topology: ChannelTopology, seed: int, round_index: int = 0) -> RoundGains:
    word = rng.random_bits(seed, round_index, topology.gain_bits(), rng.GAINS)
    return gains_from_bits(topology, word)


def sample_gains(
    topology: ChannelTopology,
    seed: int,
    n_rounds: int,
    coherence: Coherence = Coherence.EVERY_ROUND,
) -> list[RoundGains]:
    """Gains for ``n_rounds`` rounds; with ``Coherence.NEVER`` round 0 is reused."""
    coherence = Coherence(coherence)
    if coherence is Coherence.NEVER:
        return [sample_round_gains(topology, seed, 0)] * n_rounds
    return [sample_round_gains(topology, seed, r) for r in range(n_rounds)]


def apply_channel(gain: LtToeplitz, x: BitVec) -> BitVec:
    return mat_vec(gain, x)


def eve_observe(x: BitVec, eve_gain: LtToeplitz) -> BitVec:
    """Eve's view: her gain applied to the top ``eve_gain.dim`` levels of ``x``."""
    if eve_gain.dim > x.length:
        raise ValueError(f"Eve gain dim {eve_gain.dim} exceeds word length {x.length}")
    return mat_vec(eve_gain, truncate(x, eve_gain.dim))
