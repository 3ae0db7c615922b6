"""numba-compiled versions of the hot kernels.

Scalar special functions are built on ``math.erfc`` plus a continued fraction
for the scaled complementary error function in the far tail, since numba has no
``erfcx``.
"""
import math

import numpy as np
from numba import njit

_SQRT2 = math.sqrt(2.0)
_SQRT_PI = math.sqrt(math.pi)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_LN2 = math.log(2.0)
_CF_SWITCH = 4.0
_CF_DEPTH = 90


@njit(cache=True)
def _erfcx_pos(y):
    # y >= 0
    if y < _CF_SWITCH:
        return math.exp(y * y) * math.erfc(y)
    # Laplace continued fraction: erfcx(y) = 1/sqrt(pi) / (y + (1/2)/(y + 1/(y + (3/2)/(y + ...))))
    t = y
    for k in range(_CF_DEPTH, 0, -1):
        t = y + 0.5 * k / t
    return 1.0 / (_SQRT_PI * t)


@njit(cache=True)
def _ndtr(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@njit(cache=True)
def _log_ndtr(x):
    if x >= 0.0:
        return math.log1p(-0.5 * math.erfc(x / _SQRT2))
    if x > -5.0:
        return math.log(0.5 * math.erfc(-x / _SQRT2))
    return math.log(0.5 * _erfcx_pos(-x / _SQRT2)) - 0.5 * x * x


@njit(cache=True)
def _pdf_over_cdf(x):
    if x < 0.0:
        return math.sqrt(2.0 / math.pi) / _erfcx_pos(-x / _SQRT2)
    return math.exp(-0.5 * x * x) / _SQRT_2PI / _ndtr(x)


@njit(cache=True)
def log_ndtr_1d(x):
    out = np.empty_like(x)
    for i in range(x.size):
        out[i] = _log_ndtr(x[i])
    return out


@njit(cache=True)
def pdf_over_cdf_1d(x):
    out = np.empty_like(x)
    for i in range(x.size):
        out[i] = _pdf_over_cdf(x[i])
    return out


@njit(cache=True)
def b_function_1d(x):
    out = np.empty_like(x)
    for i in range(x.size):
        a = abs(x[i])
        # B peaks at exactly 4; rounding near 0 can overshoot by an ulp
        out[i] = min(2.0 * math.exp(-0.5 * a * a) / (_ndtr(a) * _erfcx_pos(a / _SQRT2)), 4.0)
    return out


@njit(cache=True)
def log_b_function_1d(x):
    out = np.empty_like(x)
    for i in range(x.size):
        a = abs(x[i])
        out[i] = min(_LN2 - 0.5 * a * a - _log_ndtr(a) - math.log(_erfcx_pos(a / _SQRT2)), 2.0 * _LN2)
    return out


@njit(cache=True)
def neg_log_ndtr_sum_grad_1d(alpha):
    grad = np.empty_like(alpha)
    total = 0.0
    for i in range(alpha.size):
        a = alpha[i]
        total -= _log_ndtr(a)
        grad[i] = -_pdf_over_cdf(a)
    return total, grad


@njit(cache=True)
def _score(g):
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    for i in range(g.size):
        s0 += g[i]
        s1 += g[i] * i
        s2 += g[i] * i * i
    return s2 * s0 - s1 * s1


@njit(cache=True)
def exhaustive_best(M, M0, rho_low, rho_high):
    idx = np.arange(M0)
    g = np.full(M, rho_low)
    best_s = 0.0
    first = True
    best = np.zeros(M, dtype=np.bool_)
    while True:
        for i in range(M):
            g[i] = rho_low
        for i in range(M0):
            g[idx[i]] = rho_high
        s = _score(g)
        if first or s > best_s + 1e-12 * max(1.0, abs(best_s)):
            first = False
            best_s = s
            best[:] = False
            for i in range(M0):
                best[idx[i]] = True
        # next combination in lexicographic order
        i = M0 - 1
        while i >= 0 and idx[i] == M - M0 + i:
            i -= 1
        if i < 0:
            break
        idx[i] += 1
        for j in range(i + 1, M0):
            idx[j] = idx[j - 1] + 1
    return best, best_s


@njit(cache=True)
def _gain(g, m, n, rho_low, rho_high):
    h = 0.0
    for j in range(g.size):
        if j != m and j != n:
            h += g[j] * (2.0 * j - m - n)
    return (rho_high - rho_low) * (n - m) * h


@njit(cache=True)
def swap_loop(delta_in, rho_low, rho_high, max_swaps):
    delta = delta_in.copy()
    M = delta.size
    m0 = 0
    for i in range(M):
        if delta[i]:
            m0 += 1
    if m0 == 0 or m0 == M or rho_low == rho_high:
        return delta, 0
    mh = (m0 + 1) // 2
    g = np.empty(M)
    for i in range(M):
        g[i] = rho_high if delta[i] else rho_low
    swaps = 0
    while swaps < max_swaps:
        moved = False
        n = 0
        # situation 1: leftmost low-precision slot inside the left edge block
        m = 0
        while delta[m]:
            m += 1
        if m + 1 <= mh:
            n = m + 1
            while not delta[n]:
                n += 1
            tol = 1e-12 * max(1.0, _score(g))
            if _gain(g, m, n, rho_low, rho_high) > tol:
                moved = True
        if not moved:
            # situation 2: rightmost low-precision slot inside the right edge block
            m = M - 1
            while delta[m]:
                m -= 1
            if m + 1 >= M - mh + 1:
                n = m - 1
                while not delta[n]:
                    n -= 1
                tol = 1e-12 * max(1.0, _score(g))
                if _gain(g, m, n, rho_low, rho_high) > tol:
                    moved = True
        if not moved:
            break
        delta[m] = True
        delta[n] = False
        g[m] = rho_high
        g[n] = rho_low
        swaps += 1
    return delta, swaps
