"""Exhaustive secrecy audit of the deterministic key-generation schemes.

Every free random bit of a run (fine channel gains, Eve's gains, the local
input bits) is enumerated, the protocol is evaluated on all ``2**B``
assignments at once, and the resulting ``(key, Eve view)`` pairs are
tallied as integer counts.  Nothing is sampled, so statements such as
"the leakage is zero" are decided by integer arithmetic.

Entropies are also kept exactly.  With counts ``c`` over ``2**B``
assignments, ``H = B - sum(c log2 c) / 2**B``; expanding ``log2 c`` over
the prime factors of ``c`` turns every entropy into a rational number plus
rational multiples of ``log2 p`` for odd primes ``p``.  Those logarithms
are linearly independent over the rationals, so two entropies are equal
exactly when their :class:`ExactBits` forms are equal.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .detmodel import ChannelTopology, Coherence, GainMode, gain_words
from .gf2lin import EMPTY_KEY, BitVec
from .protocols import Scheme, input_bits, make_inputs, round_kernel, secure_slice, validate_scheme

DEFAULT_ENUM_CAP = 24
# Assignments are packed into uint64 words.
MAX_ENUM_CAP = 62
_CHUNK_BITS = 18
# Single-lane tallies up to this code value use a dense histogram.
_DENSE_LIMIT = 1 << 26


class EnumerationCapError(ValueError):
    """The requested audit needs more free bits than the enumeration cap."""

    def __init__(self, required_bits: int, cap: int):
        super().__init__(f"enumeration needs {required_bits} free bits, cap is {cap}")
        self.required_bits = required_bits
        self.cap = cap


class Marginal(enum.Enum):
    KEY = "key"
    EVE = "eve"
    JOINT = "joint"


@lru_cache(maxsize=None)
def _factor(n: int) -> tuple[tuple[int, int], ...]:
    out = []
    p = 2
    while p * p <= n:
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out.append((p, e))
        p += 1 if p == 2 else 2
    if n > 1:
        out.append((n, 1))
    return tuple(out)


@dataclass(frozen=True)
class ExactBits:
    """``rational + sum(coeff_p * log2(p))`` over odd primes ``p``."""

    rational: Fraction = Fraction(0)
    logs: tuple[tuple[int, Fraction], ...] = ()

    @classmethod
    def _make(cls, rational, logs: dict) -> "ExactBits":
        return cls(Fraction(rational), tuple(sorted((p, c) for p, c in logs.items() if c != 0)))

    def __add__(self, other: "ExactBits") -> "ExactBits":
        logs = dict(self.logs)
        for p, c in other.logs:
            logs[p] = logs.get(p, 0) + c
        return ExactBits._make(self.rational + other.rational, logs)

    def __neg__(self) -> "ExactBits":
        return ExactBits(-self.rational, tuple((p, -c) for p, c in self.logs))

    def __sub__(self, other: "ExactBits") -> "ExactBits":
        return self + (-other)

    def is_zero(self) -> bool:
        return self.rational == 0 and not self.logs

    def __float__(self) -> float:
        return float(self.rational) + math.fsum(float(c) * math.log2(p) for p, c in self.logs)


def exact_entropy(counts, total_bits: int) -> ExactBits:
    """Entropy in bits of a distribution given as integer counts over ``2**total_bits``."""
    counts = np.asarray(counts, dtype=np.int64)
    if (counts < 0).any() or int(counts.sum()) != 1 << total_bits:
        raise ValueError(f"counts must be nonnegative and sum to 2**{total_bits}")
    values, multiplicity = np.unique(counts, return_counts=True)
    rational = Fraction(0)
    logs: dict[int, Fraction] = {}
    scale = Fraction(1, 1 << total_bits)
    for c, k in zip(values.tolist(), multiplicity.tolist()):
        if c == 0:
            continue
        weight = scale * c * k
        for p, e in _factor(c):
            if p == 2:
                rational -= weight * e
            else:
                logs[p] = logs.get(p, 0) - weight * e
    return ExactBits._make(rational + total_bits, logs)


def _word(length: int, value: int) -> BitVec:
    return EMPTY_KEY if length == 0 else BitVec(length, value)


def _unpack(rows: np.ndarray, widths: list[int]) -> list[BitVec]:
    """Lane rows back to words concatenated in column order."""
    total = sum(widths)
    offsets, acc = [], 0
    for w in _lane_widths(widths):
        offsets.append(acc)
        acc += w
    out = []
    for row in rows.tolist():
        value = 0
        for lane, off in zip(row, offsets):
            value |= int(lane) << off
        out.append(_word(total, value))
    return out


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Exact joint distribution of (key, Eve view) over ``2**total_bits`` assignments.

    ``key_values`` and ``eve_values`` list the distinct outcomes; each cell
    ``i`` has outcome ``(key_values[key_index[i]], eve_values[eve_index[i]])``
    and integer weight ``counts[i]``.
    """

    total_bits: int
    key_values: tuple[BitVec, ...]
    eve_values: tuple[BitVec, ...]
    key_index: np.ndarray
    eve_index: np.ndarray
    counts: np.ndarray
    mismatch_weight: int = 0

    def __post_init__(self):
        for arr in (self.key_index, self.eve_index, self.counts):
            arr.setflags(write=False)
        if int(self.counts.sum()) != self.total_weight:
            raise AssertionError("enumeration counts do not sum to 2**B")

    @property
    def total_weight(self) -> int:
        return 1 << self.total_bits

    @property
    def key_counts(self) -> np.ndarray:
        return _weighted_bincount(self.key_index, self.counts, len(self.key_values))

    @property
    def eve_counts(self) -> np.ndarray:
        return _weighted_bincount(self.eve_index, self.counts, len(self.eve_values))

    @property
    def cells(self) -> dict[tuple[BitVec, BitVec], int]:
        return {
            (self.key_values[k], self.eve_values[e]): int(c)
            for k, e, c in zip(self.key_index.tolist(), self.eve_index.tolist(), self.counts.tolist())
        }


def _weighted_bincount(index: np.ndarray, counts: np.ndarray, size: int) -> np.ndarray:
    if int(counts.sum()) < 1 << 53:
        return np.rint(np.bincount(index, weights=counts, minlength=size)).astype(np.int64)
    out = np.zeros(size, dtype=np.int64)
    np.add.at(out, index, counts)
    return out


def free_bits(scheme: Scheme, topology: ChannelTopology, n_rounds: int, coherence=Coherence.EVERY_ROUND) -> int:
    """Number of free random bits ``B`` an exhaustive audit has to enumerate."""
    coherence = Coherence(coherence)
    gain_blocks = 1 if coherence is Coherence.NEVER else n_rounds
    ia, ib = input_bits(scheme, topology)
    return topology.gain_bits() * gain_blocks + (ia + ib) * n_rounds


def evaluate_assignments(scheme, topology, n_rounds, coherence, start: int, stop: int) -> list[dict]:
    """Run the protocol on assignments ``start .. stop - 1``.

    Returns one dict of packed-word arrays per round with keys ``k, kp,
    h1, h2, xa, xb, s_a, s_b, y_a, y_b, y_e_odd, y_e_even``.  The
    assignment bit layout is: gain blocks (one per round, or one in total
    when gains never change), then Alice/Bob input bits per round.
    """
    t = topology
    coherence = Coherence(coherence)
    a = np.arange(start, stop, dtype=np.uint64)
    g = t.gain_bits()
    gain_blocks = 1 if coherence is Coherence.NEVER else n_rounds
    ia, ib = input_bits(scheme, t)
    rounds = []
    for r in range(n_rounds):
        g_off = 0 if coherence is Coherence.NEVER else r * g
        gword = (a >> np.uint64(g_off)) & np.uint64((1 << g) - 1)
        k, kp, h1, h2 = gain_words(t, gword)
        i_off = g * gain_blocks + r * (ia + ib)
        free_a = (a >> np.uint64(i_off)) & np.uint64((1 << ia) - 1)
        free_b = (a >> np.uint64(i_off + ia)) & np.uint64((1 << ib) - 1)
        xa, xb = make_inputs(scheme, t, free_a, free_b)
        s_a, s_b, y_a, y_b, ye1, ye2 = round_kernel(t, k, kp, h1, h2, xa, xb)
        rounds.append(dict(
            k=k, kp=kp, h1=h1, h2=h2, xa=xa, xb=xb, s_a=s_a, s_b=s_b,
            y_a=y_a, y_b=y_b, y_e_odd=ye1, y_e_even=ye2,
        ))
    return rounds


def _pack(cols: list[np.ndarray], widths: list[int]) -> np.ndarray:
    """Pack word columns (low bits first) into as few uint64 lanes as fit."""
    lanes, lane, used = [], None, 0
    for col, w in zip(cols, widths):
        if lane is not None and used + w > 64:
            lanes.append(lane)
            lane, used = None, 0
        shifted = col.astype(np.uint64) << np.uint64(used)
        lane = shifted if lane is None else lane | shifted
        used += w
    lanes.append(lane)
    return np.stack(lanes, axis=1)


def _lane_widths(widths: list[int]) -> list[int]:
    out, used = [], 0
    for w in widths:
        if used and used + w > 64:
            out.append(used)
            used = 0
        used += w
    out.append(used)
    return out


def _unique_rows(rows: np.ndarray, weights: np.ndarray | None = None):
    """Distinct rows, inverse index and (weighted) multiplicities."""
    if rows.shape[1] == 1 and len(rows) and int(rows.max()) < _DENSE_LIMIT:
        codes = rows[:, 0].astype(np.int64)
        hist = np.bincount(codes, weights=weights, minlength=int(codes.max()) + 1)
        present = np.flatnonzero(hist)
        lookup = np.zeros(len(hist), dtype=np.int64)
        lookup[present] = np.arange(len(present))
        counts = np.rint(hist[present]).astype(np.int64) if weights is not None else hist[present]
        return present.astype(np.uint64)[:, None], lookup[codes], counts
    if weights is not None:
        uniq, inverse, _ = _unique_rows(rows)
        return uniq, inverse, _weighted_bincount(inverse, weights, len(uniq))
    if rows.shape[1] == 1:
        uniq, inverse, counts = np.unique(rows[:, 0], return_inverse=True, return_counts=True)
        return uniq[:, None], inverse.reshape(-1), counts
    uniq, inverse, counts = np.unique(rows, axis=0, return_inverse=True, return_counts=True)
    return uniq, inverse.reshape(-1), counts


def _widths(topology: ChannelTopology, n_rounds: int, secure: bool) -> tuple[list[int], list[int]]:
    m = topology.common
    key_width = (m - topology.eve_common) if secure else m
    return [key_width] * n_rounds, [topology.n_1, topology.n_2] * n_rounds


def _tally_chunk(args):
    scheme, topology, n_rounds, coherence, secure, start, stop = args
    rounds = evaluate_assignments(scheme, topology, n_rounds, coherence, start, stop)
    size = stop - start
    keys, eves = [], []
    differ = np.zeros(size, dtype=bool)
    for rd in rounds:
        differ |= np.broadcast_to(rd["s_a"] != rd["s_b"], (size,))
        key = secure_slice(rd["s_a"], topology) if secure else rd["s_a"]
        keys.append(np.broadcast_to(key, (size,)))
        eves.append(np.broadcast_to(rd["y_e_odd"], (size,)))
        eves.append(np.broadcast_to(rd["y_e_even"], (size,)))
    key_widths, eve_widths = _widths(topology, n_rounds, secure)
    if sum(key_widths) + sum(eve_widths) <= 64:
        rows = _pack(keys + eves, key_widths + eve_widths)
    else:
        rows = np.concatenate([_pack(keys, key_widths), _pack(eves, eve_widths)], axis=1)
    uniq, _, counts = _unique_rows(rows)
    return uniq, counts.astype(np.int64), int(np.count_nonzero(differ))


def _resolve_cap(cap: int | None) -> int:
    if cap is None:
        env = os.environ.get("DETKEY_ENUM_CAP")
        cap = int(env) if env else DEFAULT_ENUM_CAP
    if cap > MAX_ENUM_CAP:
        raise ValueError(f"enumeration cap {cap} exceeds the supported maximum {MAX_ENUM_CAP}")
    return cap


def enumerate_joint(
    scheme: Scheme,
    topology: ChannelTopology,
    n_rounds: int = 1,
    coherence=Coherence.EVERY_ROUND,
    *,
    secure: bool = False,
    cap: int | None = None,
    workers: int = 1,
) -> JointDistribution:
    """Tally ``(s_A, y_E^n)`` over every assignment of the free random bits.

    With ``secure=True`` the key is the per-round secure slice (levels
    below Eve's common view), concatenated over rounds.  ``workers > 1``
    splits the assignment range over processes; the chunking does not
    depend on the worker count, so the result is identical either way.
    """
    scheme = Scheme(scheme)
    coherence = Coherence(coherence)
    validate_scheme(scheme, topology)
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    cap = _resolve_cap(cap)
    b = free_bits(scheme, topology, n_rounds, coherence)
    if b > cap:
        raise EnumerationCapError(b, cap)

    total = 1 << b
    step = 1 << _CHUNK_BITS
    jobs = [
        (scheme, topology, n_rounds, coherence, secure, lo, min(lo + step, total))
        for lo in range(0, total, step)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_tally_chunk, jobs))
    else:
        parts = [_tally_chunk(j) for j in jobs]

    rows = np.concatenate([p[0] for p in parts])
    counts = np.concatenate([p[1] for p in parts])
    mismatches = sum(p[2] for p in parts)
    if len(parts) > 1:
        rows, _, counts = _unique_rows(rows, counts)

    key_widths, eve_widths = _widths(topology, n_rounds, secure)
    kw = sum(key_widths)
    if kw + sum(eve_widths) <= 64:
        code = rows[:, 0]
        key_part = (code & np.uint64((1 << kw) - 1))[:, None]
        eve_part = (code >> np.uint64(kw))[:, None]
    else:
        n_key_lanes = len(_lane_widths(key_widths))
        key_part, eve_part = rows[:, :n_key_lanes], rows[:, n_key_lanes:]
    key_rows, key_index, _ = _unique_rows(key_part)
    eve_rows, eve_index, _ = _unique_rows(eve_part)
    return JointDistribution(
        total_bits=b,
        key_values=tuple(_unpack(key_rows, key_widths)),
        eve_values=tuple(_unpack(eve_rows, eve_widths)),
        key_index=key_index.astype(np.int64),
        eve_index=eve_index.astype(np.int64),
        counts=counts,
        mismatch_weight=mismatches,
    )


def exact_entropy_of(dist: JointDistribution, which: Marginal = Marginal.KEY) -> ExactBits:
    which = Marginal(which)
    if which is Marginal.KEY:
        counts = dist.key_counts
    elif which is Marginal.EVE:
        counts = dist.eve_counts
    else:
        counts = dist.counts
    return exact_entropy(counts, dist.total_bits)


def entropy(dist: JointDistribution, which: Marginal = Marginal.KEY) -> float:
    """Shannon entropy in bits of the key, Eve-view or joint marginal."""
    return float(exact_entropy_of(dist, which))


def is_independent(dist: JointDistribution) -> bool:
    """Integer test of ``count(s, e) * 2**B == count(s) * count(e)`` for all pairs."""
    kc = [int(c) for c in dist.key_counts.tolist()]
    ec = [int(c) for c in dist.eve_counts.tolist()]
    # Any pair missing from the cell list has count 0 but positive marginals.
    if len(dist.counts) != len(kc) * len(ec):
        return False
    total = dist.total_weight
    if dist.total_bits <= 31:
        lhs = dist.counts * np.int64(total)
        rhs = dist.key_counts[dist.key_index] * dist.eve_counts[dist.eve_index]
        return bool(np.array_equal(lhs, rhs))
    for k, e, c in zip(dist.key_index.tolist(), dist.eve_index.tolist(), dist.counts.tolist()):
        if c * total != kc[k] * ec[e]:
            return False
    return True


@dataclass(frozen=True)
class MutualInformation:
    bits: float
    exactly_zero: bool
    exact: ExactBits


def mutual_information(dist: JointDistribution) -> MutualInformation:
    """``I(key; Eve) = H(key) + H(Eve) - H(key, Eve)``, zero-ness decided on integers."""
    exact = (
        exact_entropy_of(dist, Marginal.KEY)
        + exact_entropy_of(dist, Marginal.EVE)
        - exact_entropy_of(dist, Marginal.JOINT)
    )
    independent = is_independent(dist)
    if independent != exact.is_zero():
        raise AssertionError("integer independence test and exact entropy disagree")
    bits = 0.0 if independent else max(float(exact), 0.0)
    return MutualInformation(bits, independent, exact)


def extraction_applies(scheme: Scheme, topology: ChannelTopology) -> bool:
    """Secure slicing is defined for product signalling against a static Eve."""
    return Scheme(scheme) is Scheme.PRODUCT and topology.eve_mode is GainMode.STATIC


@dataclass(frozen=True)
class SecrecyReport:
    """Audit result; rates are bits per channel use (two uses per round).

    ``key_*`` describe the full agreed key.  ``leakage_*`` and ``r_sd``
    describe the key claimed secure: the secure slice when extraction
    applies, otherwise the full key.  ``r_sd`` is ``None`` when that key
    leaks.
    """

    key_len_bits: int
    key_entropy_bits: float
    leakage_bits: float
    leakage_is_exactly_zero: bool
    mismatch_prob: float
    r_d: float
    r_sd: float | None
    enumerated_bits: int
    uniformity_gap_bits: float

    FIELDS = (
        "key_len_bits", "key_entropy_bits", "leakage_bits", "leakage_is_exactly_zero",
        "mismatch_prob", "r_d", "r_sd", "enumerated_bits", "uniformity_gap_bits",
    )

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    def to_csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(
            "" if getattr(self, f) is None else getattr(self, f) for f in self.FIELDS
        )
        return buf.getvalue()


def audit(
    scheme: Scheme,
    topology: ChannelTopology,
    n_rounds: int = 1,
    coherence=Coherence.EVERY_ROUND,
    *,
    cap: int | None = None,
    workers: int = 1,
) -> SecrecyReport:
    scheme = Scheme(scheme)
    full = enumerate_joint(scheme, topology, n_rounds, coherence, cap=cap, workers=workers)
    uses = 2 * n_rounds
    h_key = exact_entropy_of(full, Marginal.KEY)
    key_len = topology.common * n_rounds

    if extraction_applies(scheme, topology):
        sec = enumerate_joint(scheme, topology, n_rounds, coherence, secure=True, cap=cap, workers=workers)
        mi = mutual_information(sec)
        h_secure = exact_entropy_of(sec, Marginal.KEY)
    else:
        mi = mutual_information(full)
        h_secure = h_key
    r_sd = float(h_secure) / uses if mi.exactly_zero else None

    return SecrecyReport(
        key_len_bits=key_len,
        key_entropy_bits=float(h_key),
        leakage_bits=mi.bits,
        leakage_is_exactly_zero=mi.exactly_zero,
        mismatch_prob=full.mismatch_weight / full.total_weight,
        r_d=float(h_key) / uses,
        r_sd=r_sd,
        enumerated_bits=full.total_bits,
        uniformity_gap_bits=float(ExactBits(Fraction(key_len)) - h_key),
    )


@dataclass(frozen=True)
class ChainCheck:
    """Both sides of ``I(x'_A, x'_B; X_B y_B) = H(X_B X_A k) - H(k)``.

    ``conditional_bijection`` records whether, for every fixed pair of
    inputs, the map from channel gain to key is one-to-one.
    """

    lhs: ExactBits
    rhs: ExactBits
    conditional_bijection: bool

    @property
    def equal(self) -> bool:
        return (self.lhs - self.rhs).is_zero()


def entropy_chain_check(topology: ChannelTopology) -> ChainCheck:
    """Evaluate both sides of the entropy chain for one product round.

    Needs ``n_a == n_b == n_1 == n_2``, a static Eve, and random legitimate
    gains (otherwise ``H(k)`` is trivially zero).
    """
    t = topology
    if not (t.n_a == t.n_b == t.n_1 == t.n_2):
        raise ValueError("entropy chain check needs n_a == n_b == n_1 == n_2")
    if t.eve_mode is not GainMode.STATIC:
        raise ValueError("entropy chain check needs a static Eve gain")

    dist = enumerate_joint(Scheme.PRODUCT, t, 1)
    lhs = mutual_information(dist).exact

    b = free_bits(Scheme.PRODUCT, t, 1)
    rd = evaluate_assignments(Scheme.PRODUCT, t, 1, Coherence.EVERY_ROUND, 0, 1 << b)[0]
    size = 1 << b
    key = np.broadcast_to(rd["s_b"], (size,))
    k = np.broadcast_to(np.asarray(rd["k"], dtype=np.uint64), (size,))
    _, key_counts = np.unique(key, return_counts=True)
    _, k_counts = np.unique(k, return_counts=True)
    rhs = exact_entropy(key_counts, b) - exact_entropy(k_counts, b)

    xs = np.stack([np.broadcast_to(rd["xa"], (size,)), np.broadcast_to(rd["xb"], (size,))], axis=1)
    n_inputs = len(np.unique(xs, axis=0))
    n_triples = len(np.unique(np.column_stack([xs, key]), axis=0))
    n_k = len(k_counts)
    bijection = n_triples == n_inputs * n_k

    return ChainCheck(lhs, rhs, bijection)
