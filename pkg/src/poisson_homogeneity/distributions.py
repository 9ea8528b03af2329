"""Null distributions of the classical comparator tests.

* exact finite-n Kolmogorov-Smirnov CDF (Marsaglia, Tsang & Wang matrix method)
* chi-square quantiles (Wilson-Hilferty start, Newton refinement)
* Irwin-Hall quantiles (exact rational CDF for small n, normal approximation above)
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from statistics import NormalDist

import numpy as np
from scipy import special
from scipy.optimize import brentq

KS_EXACT_MAX_N = 1000
IRWIN_HALL_EXACT_MAX_N = 30


def ks_cdf(n, d):
    """P(D_n < d) for the two-sided one-sample KS statistic of n uniforms."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if d <= 0.5 / n:
        return 0.0
    if d >= 1:
        return 1.0
    k = int(n * d) + 1
    m = 2 * k - 1
    h = k - n * d
    i = np.arange(m)[:, None]
    j = np.arange(m)[None, :]
    diff = i - j + 1
    Hm = (diff >= 0).astype(float)
    powers = h ** np.arange(1, m + 1)
    Hm[:, 0] -= powers
    Hm[m - 1, :] -= powers[::-1]
    if 2 * h - 1 > 0:
        Hm[m - 1, 0] += (2 * h - 1) ** m
    with np.errstate(over="ignore"):
        fact = special.factorial(np.maximum(diff, 0))  # inf beyond 170!, entries become 0
    Hm = np.where(diff > 0, Hm / fact, Hm)

    # H^n by repeated squaring, rescaling to keep entries representable
    result, log_scale = np.eye(m), 0.0
    base, base_log = Hm, 0.0
    e = n
    while e:
        if e & 1:
            result = result @ base
            log_scale += base_log
            s = np.abs(result).max()
            result /= s
            log_scale += math.log(s)
        e >>= 1
        if e:
            base = base @ base
            base_log *= 2
            s = np.abs(base).max()
            base /= s
            base_log += math.log(s)
    value = result[k - 1, k - 1]
    if value <= 0:
        return 0.0
    log_p = math.log(value) + log_scale + math.lgamma(n + 1) - n * math.log(n)
    return min(1.0, math.exp(log_p))


@lru_cache(maxsize=None)
def ks_critical_value(n, alpha):
    """c with P(D_n > c) = alpha under uniformity (exact for n <= 1000)."""
    if n > KS_EXACT_MAX_N:
        from scipy.stats import kstwo
        return float(kstwo.isf(alpha, n))
    lo, hi = 0.5 / n, 1.0
    return brentq(lambda d: ks_cdf(n, d) - (1 - alpha), lo, hi, xtol=1e-14, rtol=1e-14)


def ks_statistic(sorted_points):
    """sup |F_n - F| against Uniform[0, 1] for sorted points."""
    x = np.asarray(sorted_points, dtype=float)
    n = x.size
    if n == 0:
        return 0.0
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - x), np.max(x - (i - 1) / n)))


def chi2_quantile(p, df, rtol=1e-10):
    """p-quantile of the chi-square distribution with ``df`` degrees of freedom."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    a = df / 2.0
    z = NormalDist().inv_cdf(p)
    c = 2.0 / (9.0 * df)
    base = 1 - c + z * math.sqrt(c)
    if base > 0.5:
        x = df * base ** 3
    else:
        # far lower tail: P(X <= x) ~ (x/2)^a / Gamma(a + 1) for small x
        x = 2.0 * math.exp((math.log(p) + special.gammaln(a + 1)) / a)
    for _ in range(100):
        cdf = special.gammainc(a, x / 2)
        log_pdf = (a - 1) * math.log(x / 2) - x / 2 - special.gammaln(a) - math.log(2)
        pdf = math.exp(log_pdf)
        if pdf == 0.0:
            x = x / 2 if cdf > p else 2 * x
            continue
        step = (cdf - p) / pdf
        new = x - step
        if new <= 0:
            new = x / 2
        if abs(new - x) <= rtol * new:
            return new
        x = new
    return x


def _irwin_hall_cdf_exact(n, x):
    x = Fraction(x)
    total = Fraction(0)
    for k in range(int(math.floor(x)) + 1):
        total += (-1) ** k * math.comb(n, k) * (x - k) ** n
    return total / math.factorial(n)


def irwin_hall_cdf(n, x):
    """P(U_1 + ... + U_n <= x), computed exactly in rational arithmetic."""
    if x <= 0:
        return 0.0
    if x >= n:
        return 1.0
    return float(_irwin_hall_cdf_exact(n, x))


@lru_cache(maxsize=None)
def irwin_hall_quantile(n, p):
    """p-quantile of the sum of n uniforms: exact for n <= 30, normal approximation above."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > IRWIN_HALL_EXACT_MAX_N:
        return n / 2 + NormalDist().inv_cdf(p) * math.sqrt(n / 12)
    target = Fraction(p)
    lo, hi = 0.0, float(n)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _irwin_hall_cdf_exact(n, mid) < target:
            lo = mid
        else:
            hi = mid
    return hi
