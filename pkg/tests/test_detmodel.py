
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from detkey.detmodel import (
    ChannelTopology,
    Coherence,
    GainMode,
    apply_channel,
    eve_observe,
    gain_words,
    quantize_gain,
    sample_gains,
    sample_round_gains,
    snr_to_levels,
)
from detkey.gf2lin import BitVec, identity, t_lt, truncate


def bv(*bits):
    return BitVec.from_bits(bits)


def topologies(max_n=8):
    return st.tuples(st.integers(1, max_n), st.integers(1, max_n)).flatmap(
        lambda ab: st.builds(
            ChannelTopology,
            st.just(ab[0]),
            st.just(ab[1]),
            st.integers(1, min(ab)),
            st.integers(1, min(ab)),
            st.sampled_from(list(GainMode)),
            st.sampled_from(list(GainMode)),
        )
    )


class TestSnrToLevels:
    def test_examples(self):
        assert snr_to_levels(64) == 3
        assert snr_to_levels(1) == 0
        assert snr_to_levels(100) == 4
        assert snr_to_levels(0.5) == 0
        assert snr_to_levels(64, complex_model=True) == 6

    def test_powers_of_four_exact(self):
        for k in range(0, 20):
            assert snr_to_levels(4.0**k) == k

    def test_monotone(self):
        grid = np.logspace(-3, 12, 2000)
        levels = [snr_to_levels(s) for s in grid]
        assert all(a <= b for a, b in zip(levels, levels[1:]))

    @pytest.mark.parametrize("bad", [0, -1.0, float("nan")])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(ValueError):
            snr_to_levels(bad)


class TestQuantizeGain:
    def test_examples(self):
        g = quantize_gain(5.5, 3)
        assert g.coarse_levels == 2
        assert g.fine_bits == (0, 1)
        # 1.375 = 1.011b; two fine bits keep 1.01b
        assert g.fine_gain == 1.25
        assert quantize_gain(1.0, 4).fine_bits == (0, 0, 0)
        g = quantize_gain(2.0**5, 8)
        assert g.coarse_levels == 5 and g.fine_bits == (0,) * 7

    def test_coarse_capped(self):
        assert quantize_gain(2.0**10, 3).coarse_levels == 3

    def test_full_column(self):
        g = quantize_gain(5.5, 3)
        assert g.full_column() == bv(1, 0, 1)
        assert len(quantize_gain(1.7, 1).full_column()) == 1

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            quantize_gain(0.9, 3)
        with pytest.raises(ValueError):
            quantize_gain(2.0, 0)

    @settings(max_examples=500)
    @given(st.integers(1, 20), st.floats(0, 1, exclude_max=True), st.integers(0, 19))
    def test_round_trip_bound(self, levels, frac, exponent):
        exponent = min(exponent, levels)
        h = 2.0**exponent * (1.0 + frac)
        assume(h < 2.0 ** (levels + 1))  # above this the coarse cap dominates
        g = quantize_gain(h, levels)
        assert 1.0 <= g.fine_gain < 2.0
        assert abs(g.magnitude - h) < 2.0 ** -(levels - 1) * 2.0**g.coarse_levels


class TestTopology:
    def test_eve_constraint(self):
        with pytest.raises(ValueError):
            ChannelTopology(3, 4, 4, 1)
        with pytest.raises(ValueError):
            ChannelTopology(0, 4, 1, 1)
        t = ChannelTopology(3, 5, 2, 3, "random")
        assert t.common == 3 and t.eve_common == 2 and t.eve_mode is GainMode.RANDOM

    def test_gain_bits(self):
        assert ChannelTopology(4, 4, 2, 2).gain_bits() == 3
        assert ChannelTopology(5, 3, 2, 2).gain_bits() == 4
        assert ChannelTopology(3, 3, 2, 3, GainMode.RANDOM).gain_bits() == 2 + 1 + 2
        assert ChannelTopology(3, 3, 2, 2, legit_mode=GainMode.STATIC).gain_bits() == 0


class TestSampling:
    @settings(max_examples=200, deadline=None)
    @given(topologies(), st.integers(0, 2**64 - 1), st.integers(0, 1000))
    def test_reciprocity_and_unit_diagonal(self, topo, seed, r):
        g = sample_round_gains(topo, seed, r)
        m = topo.common
        assert truncate(g.k_matrix.first_col, m) == truncate(g.k_prime_matrix.first_col, m)
        assert (g.k_matrix.dim, g.k_prime_matrix.dim, g.eve1.dim, g.eve2.dim) == (
            topo.n_a, topo.n_b, topo.n_1, topo.n_2,
        )
        for mat in (g.k_matrix, g.k_prime_matrix, g.eve1, g.eve2):
            assert mat.first_col[0] == 1
        assert len(g.fine) == m - 1
        assert g.k_matrix.first_col.bits[1:m] == g.fine
        if topo.eve_mode is GainMode.STATIC:
            assert g.eve1 == identity(topo.n_1) and g.eve2 == identity(topo.n_2)
        if topo.legit_mode is GainMode.STATIC:
            assert g.k_matrix == identity(topo.n_a)

    def test_deterministic(self):
        t = ChannelTopology(7, 5, 3, 4, GainMode.RANDOM)
        assert sample_gains(t, 99, 6) == sample_gains(t, 99, 6)
        assert sample_gains(t, 99, 6) != sample_gains(t, 100, 6)

    def test_coherence_never_reuses(self):
        t = ChannelTopology(6, 6, 2, 2)
        gains = sample_gains(t, 5, 4, Coherence.NEVER)
        assert all(g == gains[0] for g in gains)
        varying = sample_gains(t, 5, 4, "every-round")
        assert len({g.fine for g in varying}) > 1

    def test_fine_bit_mean(self):
        t = ChannelTopology(4, 4, 1, 1)
        bits = np.array([sample_round_gains(t, 12345, r).fine for r in range(100_000)])
        assert abs(bits.mean() - 0.5) < 0.01
        assert np.all(np.abs(bits.mean(axis=0) - 0.5) < 0.01)

    def test_gain_words_vectorized_matches_scalar(self):
        t = ChannelTopology(5, 4, 2, 3, GainMode.RANDOM)
        words = np.arange(1 << t.gain_bits(), dtype=np.uint64)
        cols = gain_words(t, words)
        for w in range(0, 1 << t.gain_bits(), 37):
            assert tuple(int(c[w]) for c in cols) == gain_words(t, w)


class TestApplyChannel:
    def test_examples(self):
        x = bv(1, 0, 1, 1)
        assert apply_channel(identity(4), x) == x
        assert apply_channel(t_lt(bv(1, 1)), bv(1, 0)) == bv(1, 1)
        K = t_lt(bv(1, 0, 1, 1))
        assert apply_channel(K, BitVec.unit(4)) == K.first_col
        with pytest.raises(ValueError):
            apply_channel(identity(3), x)


class TestEveObserve:
    def test_examples(self):
        assert eve_observe(bv(1, 0, 1, 1), identity(2)) == bv(1, 0)
        assert eve_observe(bv(1, 0, 1, 1), identity(4)) == bv(1, 0, 1, 1)
        assert eve_observe(bv(1, 0, 0), t_lt(bv(1, 1))) == bv(1, 1)
        with pytest.raises(ValueError):
            eve_observe(bv(1, 0), identity(3))

    @pytest.mark.parametrize("n", range(1, 7))
    def test_lower_bits_invisible(self, n):
        for d in range(1, n + 1):
            for c in range(1, 1 << d, 2):
                H = t_lt(BitVec(d, c))
                seen = {}
                for x in range(1 << n):
                    v = BitVec(n, x)
                    top = truncate(v, d)
                    out = eve_observe(v, H)
                    assert seen.setdefault(top, out) == out
