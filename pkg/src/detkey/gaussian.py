"""Gaussian key-rate lower bound and SNR translations of the deterministic rates.

The bound on ``I(Y_A, X_A; Y_B, X_B)`` for ``K ~ N(0, s_k)``,
``X_A, X_B ~ N(0, P)`` and noise variance ``s_z`` is

    E_K[log2(1 + K^2 P / s_z)]
    - 1/2 E[log2(1 + X_A^2 s_k / s_z)] - 1/2 E[log2(1 + X_B^2 s_k / s_z)]
    + 1/2 E[log2(1 + X_A^2 X_B^2 s_k^2 / ((X_A^2 + X_B^2) s_k s_z + s_z^2))]

Each term is estimated either by Monte Carlo or by adaptive quadrature;
all logarithms are base 2.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import rng

LN2 = math.log(2.0)
# Integration range in standard deviations; the Gaussian tail beyond it is
# below 1e-20 relative to the integrand scale.
TAIL_SIGMAS = 10.0
MC_BLOCK = 1 << 16


class Method(enum.Enum):
    MONTE_CARLO = "mc"
    QUADRATURE = "quad"


@dataclass(frozen=True)
class GaussianParams:
    p: float
    sigma_k_sq: float
    sigma_z_sq: float

    def __post_init__(self):
        for name in ("p", "sigma_k_sq", "sigma_z_sq"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.p <= 0:
            raise ValueError(f"p must be positive, got {self.p!r}")
        if self.sigma_k_sq < 0:
            raise ValueError(f"sigma_k_sq must be >= 0, got {self.sigma_k_sq!r}")
        if self.sigma_z_sq <= 0:
            raise ValueError(f"sigma_z_sq must be positive, got {self.sigma_z_sq!r}")


@dataclass(frozen=True)
class BoundEstimate:
    """Bound value and its four expectation terms, each including its 1/2 factor.

    ``value == terms[0] - terms[1] - terms[2] + terms[3]``.  ``std_error``
    is 0 for quadrature.
    """

    value: float
    std_error: float
    terms: tuple[float, float, float, float]
    method: Method

    @property
    def clamped(self) -> float:
        """The bound as a key rate, i.e. never below zero."""
        return max(self.value, 0.0)

    CSV_HEADER = ("p", "sigma_k_sq", "sigma_z_sq", "method", "value", "std_error",
                  "term1", "term2", "term3", "term4")

    def csv_row(self, params: GaussianParams) -> tuple:
        return (params.p, params.sigma_k_sq, params.sigma_z_sq, self.method.value,
                self.value, self.std_error, *self.terms)


class QuadratureError(RuntimeError):
    def __init__(self, message: str, best: BoundEstimate):
        super().__init__(message)
        self.best = best


def _log2_1p(u):
    return np.log1p(u) / LN2


def _integrands(params: GaussianParams, k, xa, xb):
    p, sk, sz = params.p, params.sigma_k_sq, params.sigma_z_sq
    t1 = _log2_1p(k * k * p / sz)
    t2 = 0.5 * _log2_1p(xa * xa * sk / sz)
    t3 = 0.5 * _log2_1p(xb * xb * sk / sz)
    a2, b2 = xa * xa, xb * xb
    t4 = 0.5 * _log2_1p(a2 * b2 * sk * sk / ((a2 + b2) * sk * sz + sz * sz))
    return t1, t2, t3, t4


def _combine(terms) -> float:
    t1, t2, t3, t4 = terms
    return math.fsum((t1, -t2, -t3, t4))


def _mc_block(params: GaussianParams, seed: int, block: int, size: int):
    g = rng.generator(seed, block, rng.GAUSSIAN)
    k = g.normal(0.0, math.sqrt(params.sigma_k_sq), size)
    xa = g.normal(0.0, math.sqrt(params.p), size)
    xb = g.normal(0.0, math.sqrt(params.p), size)
    t1, t2, t3, t4 = _integrands(params, k, xa, xb)
    combined = t1 - t2 - t3 + t4
    return (
        np.array([t1.sum(), t2.sum(), t3.sum(), t4.sum()]),
        float(combined.sum()),
        float((combined * combined).sum()),
    )


def theorem1_mc(params: GaussianParams, n_samples: int, seed: int = 0, workers: int = 1) -> BoundEstimate:
    """Monte Carlo estimate from ``n_samples`` i.i.d. draws of ``(K, X_A, X_B)``.

    Draws come in fixed blocks addressed by ``(seed, block index)``; block
    sums are merged in block order, so ``workers`` never changes the result.
    The standard error is that of the per-sample combined integrand.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    sizes = [MC_BLOCK] * (n_samples // MC_BLOCK)
    if n_samples % MC_BLOCK:
        sizes.append(n_samples % MC_BLOCK)

    def run(i):
        return _mc_block(params, seed, i, sizes[i])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]

    n = n_samples
    term_sums = np.zeros(4)
    s1 = s2 = 0.0
    for terms, a, b in parts:
        term_sums += terms
        s1 += a
        s2 += b
    means = term_sums / n
    terms = tuple(float(v) for v in means)
    value = _combine(terms)
    if n > 1:
        var = max(s2 - s1 * s1 / n, 0.0) / (n - 1)
        std_error = math.sqrt(var / n)
    else:
        std_error = math.inf
    return BoundEstimate(value, std_error, terms, Method.MONTE_CARLO)


def _half_normal_expectation(f, sigma: float, rel_tol: float):
    """``E[f(X)]`` for even ``f`` and ``X ~ N(0, sigma^2)``, integrated on ``[0, 10 sigma]``."""

    def integrand(t):
        return 2.0 * math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi) * f(sigma * t)

    val, err = integrate.quad(integrand, 0.0, TAIL_SIGMAS, epsabs=0.0, epsrel=rel_tol, limit=500)
    return val, err


def theorem1_quadrature(params: GaussianParams, rel_tol: float = 1e-8) -> BoundEstimate:
    """Adaptive quadrature: 1-D for the first three terms, nested 1-D for the fourth."""
    if not 0 < rel_tol <= 1e-2:
        raise ValueError(f"rel_tol must lie in (0, 1e-2], got {rel_tol!r}")
    p, sk, sz = params.p, params.sigma_k_sq, params.sigma_z_sq
    if sk == 0:
        return BoundEstimate(0.0, 0.0, (0.0, 0.0, 0.0, 0.0), Method.QUADRATURE)

    sq_p = math.sqrt(p)
    t1, e1 = _half_normal_expectation(lambda k: math.log1p(k * k * p / sz) / LN2, math.sqrt(sk), rel_tol)
    t2, e2 = _half_normal_expectation(lambda x: 0.5 * math.log1p(x * x * sk / sz) / LN2, sq_p, rel_tol)

    def inner(a):
        a2 = a * a

        def g(b):
            b2 = b * b
            return 0.5 * math.log1p(a2 * b2 * sk * sk / ((a2 + b2) * sk * sz + sz * sz)) / LN2

        return _half_normal_expectation(g, sq_p, rel_tol * 0.1)[0]

    t4, e4 = _half_normal_expectation(inner, sq_p, rel_tol)
    terms = (t1, t2, t2, t4)
    estimate = BoundEstimate(_combine(terms), 0.0, terms, Method.QUADRATURE)
    for val, err in ((t1, e1), (t2, e2), (t4, e4)):
        if err > max(rel_tol * abs(val), 1e-300):
            raise QuadratureError(f"quadrature error estimate {err:.3g} above tolerance", estimate)
    return estimate


def pilot_rate_gaussian(snr_a: float, snr_b: float) -> float:
    """Pilot key rate ``min(log2 snr_a, log2 snr_b) / 4``, zero for ``snr <= 1``."""
    if snr_a <= 1 or snr_b <= 1:
        return 0.0
    return 0.25 * min(math.log2(snr_a), math.log2(snr_b))


def static_secure_rate_gaussian(snr_a: float, snr_b: float, snr_e1: float, snr_e2: float) -> float:
    """Secure rate with static gains everywhere, in bits per channel use.

    ``(min(log2 snr_a, log2 snr_b) - min(log2 snr_e1, log2 snr_e2)) / 4``,
    each log clipped at zero and the result clamped at zero.  The 1/4 is
    applied to both minima so the rate matches the bit-level result
    ``(min(N_A, N_B) - min(N_1, N_2)) / 2`` under ``N = log2(snr) / 2``.
    """
    for v in (snr_a, snr_b, snr_e1, snr_e2):
        if not v > 0:
            raise ValueError(f"snr must be positive, got {v!r}")
    legit = max(0.0, min(math.log2(snr_a), math.log2(snr_b)))
    eve = max(0.0, min(math.log2(snr_e1), math.log2(snr_e2)))
    return max(0.0, 0.25 * (legit - eve))
