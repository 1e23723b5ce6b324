"""Independent oracles used to pin expected values in the tests.

Everything here recomputes quantities from first principles (enumeration,
brute-force summation, direct simulation, high-precision series) without
going through the library code paths under test.
"""

from __future__ import annotations

import math
from itertools import product

import mpmath
import numpy as np


def gaussian_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def normal_pdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)


def tv_between_unit_normals(delta: float) -> float:
    """Exact total variation distance between N(0,1) and N(delta,1)."""
    return 2.0 * gaussian_cdf(abs(delta) / 2.0) - 1.0


def poisson_pmf(rate: float, k: int) -> float:
    if rate == 0.0:
        return 1.0 if k == 0 else 0.0
    return math.exp(-rate + k * math.log(rate) - math.lgamma(k + 1))


def skellam_corr_expectation(alpha, rate1, rate2, kmax: int = 60) -> float:
    """Double summation of (a/(a+1))**|d| over independent shifted-Poisson starts."""
    r = alpha / (alpha + 1.0)
    total = 0.0
    for i in range(kmax):
        pi = poisson_pmf(rate1, i)
        for j in range(kmax):
            total += pi * poisson_pmf(rate2, j) * r ** abs(i - j)
    return total


def poisson_diff_corr_expectation(alpha, rate, kmax: int = 250) -> float:
    """Single summation of (a/(a+1))**x over a Poisson difference."""
    r = alpha / (alpha + 1.0)
    return sum(r**x * poisson_pmf(rate, x) for x in range(kmax))


def blocked_corr_formula(alpha, b0, b1, b2) -> float:
    return 1.0 - (alpha / (alpha + 2.0)) ** b0 * (1.0 - (alpha / (alpha + 1.0)) ** (b1 + b2))


def blocked_poisson_corr_expectation(alpha, rate0, rate1, rate2, bmax: int = 40) -> float:
    """Triple summation of the fixed-blocks correlation over Poisson block lengths."""
    total = 0.0
    for b0, b1, b2 in product(range(bmax), repeat=3):
        weight = poisson_pmf(rate0, b0) * poisson_pmf(rate1, b1) * poisson_pmf(rate2, b2)
        total += weight * blocked_corr_formula(alpha, b0, b1, b2)
    return total


def parent_corr_series(alpha, seq1, tail_levels: int = 4000) -> float:
    """Direct product-form series for the correlation with the parent process."""
    seq = list(seq1) + [1] * tail_levels
    total = 0.0
    prodterm = 1.0
    for flag in seq:
        if flag:
            total += prodterm
        prodterm *= alpha / (alpha + flag + 1.0)
    return 2.0 / (alpha + 2.0) * total


def bessel_series_highprec(order: int, x: float, terms: int = 50) -> float:
    """High-precision ascending series for the modified Bessel function."""
    with mpmath.workdps(80):
        half = mpmath.mpf(x) / 2
        total = mpmath.mpf(0)
        for m in range(terms):
            total += half ** (2 * m + order) / (mpmath.factorial(m) * mpmath.factorial(m + order))
        return float(total)


def simulate_measure_correlation(alpha, p1, p2, reps, truncation, seed, n_batches=100):
    """Prior-simulation estimate of Corr(p_1(A), p_2(A)) under Bernoulli thinning.

    A is the lower half-line at the median of the base measure's locations;
    for iid continuous atoms the event "atom lands in A" is an independent
    fair coin, which is how the atoms enter the simulation. Returns a
    batch-means estimate and its standard error.
    """
    rng = np.random.default_rng(seed)
    T = truncation
    pa = np.empty(reps)
    pb = np.empty(reps)
    done = 0
    chunk = 2048
    inv_alpha = 1.0 / alpha
    while done < reps:
        m = min(chunk, reps - done)
        flags1 = rng.random((m, T)) < p1
        flags2 = rng.random((m, T)) < p2
        v = 1.0 - rng.random((m, T)) ** inv_alpha  # Beta(1, alpha) by inversion
        in_set = rng.random((m, T)) < 0.5  # atom below the location median
        vf1 = v * flags1
        vf2 = v * flags2
        w1 = vf1.copy()
        w1[:, 1:] *= np.cumprod(1.0 - vf1, axis=1)[:, :-1]
        w2 = vf2.copy()
        w2[:, 1:] *= np.cumprod(1.0 - vf2, axis=1)[:, :-1]
        pa[done : done + m] = (w1 * in_set).sum(axis=1)
        pb[done : done + m] = (w2 * in_set).sum(axis=1)
        done += m

    batch = reps // n_batches
    a = pa[: batch * n_batches].reshape(n_batches, batch)
    b = pb[: batch * n_batches].reshape(n_batches, batch)
    am = a - a.mean(axis=1, keepdims=True)
    bm = b - b.mean(axis=1, keepdims=True)
    rs = (am * bm).sum(axis=1) / np.sqrt((am * am).sum(axis=1) * (bm * bm).sum(axis=1))
    return float(rs.mean()), float(rs.std(ddof=1) / math.sqrt(n_batches))


def nig_posterior(y, loc0, scale0, shape0, rate0):
    """Conjugate normal-inverse-gamma posterior parameters for one component."""
    y = np.asarray(y, dtype=float)
    n = y.size
    ybar = y.mean() if n else 0.0
    sse = ((y - ybar) ** 2).sum() if n else 0.0
    scale_n = scale0 + n
    loc_n = (scale0 * loc0 + y.sum()) / scale_n
    shape_n = shape0 + 0.5 * n
    rate_n = rate0 + 0.5 * (sse + scale0 * n / scale_n * (ybar - loc0) ** 2)
    return loc_n, scale_n, shape_n, rate_n


def enumerate_set_partitions(n: int):
    """All set partitions of range(n) as label vectors (restricted growth strings)."""
    if n == 0:
        yield ()
        return
    labels = [0] * n

    def rec(i, maxlab):
        if i == n:
            yield tuple(labels)
            return
        for lab in range(maxlab + 2):
            labels[i] = lab
            yield from rec(i + 1, max(maxlab, lab))

    yield from rec(1, 0)


def vi_bound_direct(P: np.ndarray, labels) -> float:
    """Direct evaluation of the similarity-based VI lower bound."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    total = 0.0
    for i in range(n):
        same = labels == labels[i]
        total += math.log2(same.sum()) + math.log2(P[i].sum()) - 2.0 * math.log2(P[i][same].sum())
    return total / n
