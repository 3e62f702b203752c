"""Pilot, product and mixed signalling key generation.

None of the schemes uses a public channel: Alice and Bob each derive their
key from what they sent and what they received, and agreement follows from
commutativity of lower-triangular Toeplitz products.

The per-round arithmetic lives in :func:`round_kernel`, which works on
packed polynomial words (ints or numpy ``uint64`` arrays).  The ``run_*``
functions wrap it with typed values for single runs; the secrecy auditor
feeds it whole arrays of enumerated randomness.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from . import rng
from .detmodel import ChannelTopology, GainMode, RoundGains
from .gf2lin import EMPTY_KEY, BitVec, clmul_trunc

__all__ = [
    "Scheme",
    "RoundRecord",
    "Transcript",
    "KeyPair",
    "RateReport",
    "validate_scheme",
    "input_bits",
    "make_inputs",
    "round_kernel",
    "secure_slice",
    "run_round",
    "run_pilot",
    "run_product",
    "run_mixed",
    "run_scheme",
    "extract_secure_key",
    "rate_report",
    "dumps_transcript",
    "loads_transcript",
]


class Scheme(enum.Enum):
    PILOT = "pilot"
    PRODUCT = "product"
    MIXED = "mixed"


def validate_scheme(scheme: Scheme, topology: ChannelTopology) -> None:
    scheme = Scheme(scheme)
    if scheme is Scheme.MIXED:
        if topology.eve_mode is not GainMode.STATIC:
            raise ValueError("mixed signalling is defined for a static Eve gain only")
        if topology.n_a == topology.n_1 and topology.n_b == topology.n_2:
            raise ValueError(
                "mixed signalling needs private levels: n_a > n_1 or n_b > n_2"
            )


def input_bits(scheme: Scheme, topology: ChannelTopology) -> tuple[int, int]:
    """Free random input bits per round for Alice and Bob."""
    scheme = Scheme(scheme)
    t = topology
    if scheme is Scheme.PILOT:
        return 0, 0
    if scheme is Scheme.PRODUCT:
        return t.n_a - 1, t.n_b - 1
    return t.n_a - t.n_1, t.n_b - t.n_2


def make_inputs(scheme: Scheme, topology: ChannelTopology, free_a, free_b):
    """Transmitted words from free bits; the top level is always 1.

    Mixed signalling puts ``[1, 0, ..., 0]`` on the levels Eve receives and
    the free bits strictly below them.
    """
    scheme = Scheme(scheme)
    if scheme is Scheme.PILOT:
        return free_a | 1, free_b | 1
    if scheme is Scheme.PRODUCT:
        return (free_a << 1) | 1, (free_b << 1) | 1
    return (free_a << topology.n_1) | 1, (free_b << topology.n_2) | 1


def _mask(n: int) -> int:
    return (1 << n) - 1


def round_kernel(topology: ChannelTopology, k, kp, h1, h2, xa, xb):
    """One round on packed words.

    Returns ``(s_a, s_b, y_a, y_b, y_e_odd, y_e_even)``.  Each party
    truncates to the common ``min(n_a, n_b)`` levels and multiplies its
    observation by the Toeplitz matrix of its own transmitted word.
    """
    t = topology
    m = t.common
    mm = _mask(m)
    y_b = clmul_trunc(k, xa, t.n_a)
    y_a = clmul_trunc(kp, xb, t.n_b)
    s_b = clmul_trunc(xb & mm, y_b & mm, m)
    s_a = clmul_trunc(xa & mm, y_a & mm, m)
    y_e_odd = clmul_trunc(h1, xa & _mask(t.n_1), t.n_1)
    y_e_even = clmul_trunc(h2, xb & _mask(t.n_2), t.n_2)
    return s_a, s_b, y_a, y_b, y_e_odd, y_e_even


def secure_slice(key, topology: ChannelTopology):
    """Key levels strictly below Eve's common view, as a packed word."""
    e = topology.eve_common
    return (key >> e) & _mask(topology.common - e)


@dataclass(frozen=True)
class RoundRecord:
    gains: RoundGains
    x_a: BitVec
    x_b: BitVec
    y_a: BitVec
    y_b: BitVec
    y_e_odd: BitVec
    y_e_even: BitVec
    s_a: BitVec
    s_b: BitVec


@dataclass(frozen=True)
class Transcript:
    scheme: Scheme
    topology: ChannelTopology
    rounds: tuple[RoundRecord, ...]
    seed_a: int | None = None
    seed_b: int | None = None

    @property
    def eve_view(self) -> BitVec:
        """Concatenated odd/even Eve observations over all rounds."""
        out = EMPTY_KEY
        for r in self.rounds:
            out = out.concat(r.y_e_odd).concat(r.y_e_even)
        return out


@dataclass(frozen=True)
class KeyPair:
    s_a: BitVec
    s_b: BitVec
    bits_per_round: int

    @property
    def agree(self) -> bool:
        return self.s_a == self.s_b


def run_round(topology: ChannelTopology, gains: RoundGains, x_a: BitVec, x_b: BitVec) -> RoundRecord:
    """Play one round with explicit transmitted words."""
    t = topology
    if x_a.length != t.n_a or x_b.length != t.n_b:
        raise ValueError(
            f"input lengths ({x_a.length}, {x_b.length}) do not match (n_a, n_b) = ({t.n_a}, {t.n_b})"
        )
    if (gains.k_matrix.dim, gains.k_prime_matrix.dim, gains.eve1.dim, gains.eve2.dim) != (
        t.n_a, t.n_b, t.n_1, t.n_2,
    ):
        raise ValueError("gain dimensions do not match the topology")
    s_a, s_b, y_a, y_b, ye1, ye2 = round_kernel(
        t,
        gains.k_matrix.first_col.value,
        gains.k_prime_matrix.first_col.value,
        gains.eve1.first_col.value,
        gains.eve2.first_col.value,
        x_a.value,
        x_b.value,
    )
    m = t.common
    return RoundRecord(
        gains, x_a, x_b,
        BitVec(t.n_b, y_a), BitVec(t.n_a, y_b),
        BitVec(t.n_1, ye1), BitVec(t.n_2, ye2),
        BitVec(m, s_a), BitVec(m, s_b),
    )


def _assemble(scheme, topology, records, seeds) -> tuple[Transcript, KeyPair]:
    s_a = s_b = EMPTY_KEY
    for r in records:
        s_a = s_a.concat(r.s_a)
        s_b = s_b.concat(r.s_b)
    seed_a, seed_b = seeds if seeds is not None else (None, None)
    transcript = Transcript(scheme, topology, tuple(records), seed_a, seed_b)
    return transcript, KeyPair(s_a, s_b, topology.common)


def _check_rounds(gains_per_round: Sequence[RoundGains], n_rounds: int) -> None:
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    if len(gains_per_round) < n_rounds:
        raise ValueError(f"need gains for {n_rounds} rounds, got {len(gains_per_round)}")


def _run_random_inputs(scheme, topology, gains_per_round, n_rounds, seeds):
    _check_rounds(gains_per_round, n_rounds)
    validate_scheme(scheme, topology)
    seed_a, seed_b = seeds
    bits_a, bits_b = input_bits(scheme, topology)
    records = []
    for r in range(n_rounds):
        free_a = rng.random_bits(seed_a, r, bits_a, rng.ALICE)
        free_b = rng.random_bits(seed_b, r, bits_b, rng.BOB)
        xa, xb = make_inputs(scheme, topology, free_a, free_b)
        records.append(
            run_round(topology, gains_per_round[r], BitVec(topology.n_a, xa), BitVec(topology.n_b, xb))
        )
    return _assemble(scheme, topology, records, seeds)


def run_pilot(topology: ChannelTopology, gains_per_round: Sequence[RoundGains], n_rounds: int):
    """Both parties send ``e_1``; each observes the first column of its gain."""
    _check_rounds(gains_per_round, n_rounds)
    records = [
        run_round(topology, gains_per_round[r], BitVec.unit(topology.n_a), BitVec.unit(topology.n_b))
        for r in range(n_rounds)
    ]
    return _assemble(Scheme.PILOT, topology, records, None)


def run_product(topology, gains_per_round, n_rounds, seeds: tuple[int, int]):
    """Random leading-one words from each party's seed."""
    return _run_random_inputs(Scheme.PRODUCT, topology, gains_per_round, n_rounds, seeds)


def run_mixed(topology, gains_per_round, n_rounds, seeds: tuple[int, int]):
    """Pilot on Eve's levels, random private bits below them."""
    return _run_random_inputs(Scheme.MIXED, topology, gains_per_round, n_rounds, seeds)


def run_scheme(scheme, topology, gains_per_round, n_rounds, seeds=(0, 0)):
    scheme = Scheme(scheme)
    if scheme is Scheme.PILOT:
        return run_pilot(topology, gains_per_round, n_rounds)
    if scheme is Scheme.PRODUCT:
        return run_product(topology, gains_per_round, n_rounds, seeds)
    return run_mixed(topology, gains_per_round, n_rounds, seeds)


def extract_secure_key(key_round: BitVec, topology: ChannelTopology) -> BitVec:
    """Levels ``min(n_1, n_2) + 1 .. min(n_a, n_b)`` of a product-signalling key.

    Meant for product signalling with a static Eve gain.  Returns
    ``EMPTY_KEY`` when Eve sees every common level.
    """
    if key_round.length != topology.common:
        raise ValueError(f"expected a {topology.common}-bit round key, got {key_round.length}")
    n = topology.common - topology.eve_common
    if n == 0:
        return EMPTY_KEY
    return BitVec(n, secure_slice(key_round.value, topology))


@dataclass(frozen=True)
class RateReport:
    r_d: float
    r_d_nominal: float
    r_sd: float | None


def rate_report(
    keypair: KeyPair,
    n_channel_uses: int,
    key_entropy_bits: float | None = None,
    secure_key_bits: float | None = None,
) -> RateReport:
    """Key rates in bits per channel use.

    ``key_entropy_bits`` is the exact key entropy when the caller has it
    (see :func:`detkey.secrecy.audit`); otherwise ``r_d`` falls back to the
    nominal key length.  ``r_sd`` is reported only when ``secure_key_bits``
    is given.
    """
    if not keypair.agree:
        raise ValueError("keys disagree; no rate to report")
    if n_channel_uses < 1:
        raise ValueError("n_channel_uses must be >= 1")
    nominal = keypair.s_a.length / n_channel_uses
    r_d = nominal if key_entropy_bits is None else key_entropy_bits / n_channel_uses
    r_sd = None if secure_key_bits is None else secure_key_bits / n_channel_uses
    return RateReport(r_d, nominal, r_sd)


# Transcript text format: one round per line,
#   round fine x_a x_b y_a y_b y_e_odd y_e_even
# each word written as "<len>:<hex>" with the top level as the hex MSB.
TRANSCRIPT_FIELDS = ("round", "fine", "x_a", "x_b", "y_a", "y_b", "y_e_odd", "y_e_even")


def _fine_word(fine: tuple[int, ...]) -> BitVec:
    return BitVec.from_bits(fine) if fine else EMPTY_KEY


def dumps_transcript(transcript: Transcript) -> str:
    t = transcript.topology
    lines = [
        f"# scheme={transcript.scheme.value} n_a={t.n_a} n_b={t.n_b} n_1={t.n_1} n_2={t.n_2} "
        f"eve_mode={t.eve_mode.value} legit_mode={t.legit_mode.value} "
        f"seed_a={transcript.seed_a} seed_b={transcript.seed_b}",
        "# " + " ".join(TRANSCRIPT_FIELDS),
    ]
    for i, r in enumerate(transcript.rounds):
        words = (_fine_word(r.gains.fine), r.x_a, r.x_b, r.y_a, r.y_b, r.y_e_odd, r.y_e_even)
        lines.append(" ".join([str(i), *(w.to_hex() for w in words)]))
    return "\n".join(lines) + "\n"


def loads_transcript(text: str) -> list[dict]:
    """Parse the round lines of :func:`dumps_transcript` output.

    Each round comes back as a dict keyed by field name; ``fine`` is a bit
    tuple, the other words are :class:`BitVec`.
    """
    rounds = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != len(TRANSCRIPT_FIELDS):
            raise ValueError(f"line {lineno}: expected {len(TRANSCRIPT_FIELDS)} fields, got {len(parts)}")
        rec: dict = {"round": int(parts[0])}
        for name, word in zip(TRANSCRIPT_FIELDS[1:], parts[1:]):
            rec[name] = BitVec.from_hex(word)
        rec["fine"] = rec["fine"].bits
        rounds.append(rec)
    return rounds
