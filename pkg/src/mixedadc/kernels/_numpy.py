"""Pure numpy/scipy implementations of the hot kernels."""
from itertools import combinations

import numpy as np
from scipy import special

_SQRT2 = np.sqrt(2.0)
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
_LN2 = np.log(2.0)


def log_ndtr(x):
    return special.log_ndtr(np.asarray(x, dtype=float))


def pdf_over_cdf(x):
    """phi(x) / Phi(x), stable in both tails."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    neg = x < 0
    out[neg] = _SQRT_2_OVER_PI / special.erfcx(-x[neg] / _SQRT2)
    xp = x[~neg]
    out[~neg] = np.exp(-0.5 * xp * xp) / np.sqrt(2 * np.pi) / special.ndtr(xp)
    return out


def b_function(x):
    ax = np.abs(np.asarray(x, dtype=float))
    # B peaks at exactly 4; rounding near 0 can overshoot by an ulp
    return np.minimum(2.0 * np.exp(-0.5 * ax * ax) / (special.ndtr(ax) * special.erfcx(ax / _SQRT2)), 4.0)


def log_b_function(x):
    ax = np.abs(np.asarray(x, dtype=float))
    return np.minimum(_LN2 - 0.5 * ax * ax - special.log_ndtr(ax) - np.log(special.erfcx(ax / _SQRT2)), 2 * _LN2)


def neg_log_ndtr_sum_grad(alpha):
    """Return (sum of -ln Phi(alpha), d/d alpha of each term)."""
    alpha = np.asarray(alpha, dtype=float)
    return float(-special.log_ndtr(alpha).sum()), -pdf_over_cdf(alpha)


def _scores(g_rows, idx):
    s0 = g_rows.sum(axis=1)
    s1 = g_rows @ idx
    s2 = g_rows @ (idx * idx)
    return s2 * s0 - s1 * s1


def exhaustive_best(M, M0, rho_low, rho_high, chunk=65536):
    """Lexicographically first placement maximising S over all C(M, M0)."""
    idx = np.arange(M, dtype=float)
    best_s = -np.inf
    best = None
    it = combinations(range(M), M0)
    while True:
        block = list(_take(it, chunk))
        if not block:
            break
        g = np.full((len(block), M), rho_low, dtype=float)
        if M0:
            rows = np.repeat(np.arange(len(block)), M0)
            g[rows, np.asarray(block).ravel()] = rho_high
        s = _scores(g, idx)
        j = int(np.argmax(s))
        if best is None or s[j] > best_s + 1e-12 * max(1.0, abs(best_s)):
            # argmax returns the first occurrence; keep it only if strictly better
            # than the incumbent so earlier (lexicographically smaller) ties win.
            tol = 1e-12 * max(1.0, abs(s[j]))
            j = int(np.flatnonzero(s >= s[j] - tol)[0])
            best_s = float(s[j])
            best = block[j]
    delta = np.zeros(M, dtype=bool)
    delta[list(best)] = True
    return delta, best_s


def _take(it, n):
    for _ in range(n):
        try:
            yield next(it)
        except StopIteration:
            return


def swap_gain(g, m, n, rho_low, rho_high):
    """S(after) - S(before) when antenna m (low) and n (high) trade classes."""
    j = np.arange(len(g), dtype=float)
    w = 2.0 * j - m - n
    h = float(g @ w - g[m] * w[m] - g[n] * w[n])
    return (rho_high - rho_low) * (n - m) * h


def swap_loop(delta, rho_low, rho_high, max_swaps=1_000_000):
    """Apply the two edge-filling swap situations until neither improves S."""
    delta = np.array(delta, dtype=bool)
    M = delta.size
    m0 = int(delta.sum())
    if m0 in (0, M) or rho_low == rho_high:
        return delta, 0
    mh = (m0 + 1) // 2
    g = np.where(delta, rho_high, rho_low).astype(float)
    swaps = 0
    while swaps < max_swaps:
        moved = False
        low = np.flatnonzero(~delta)
        m = int(low[0])
        if m + 1 <= mh:
            n = int(np.flatnonzero(delta[m + 1:])[0]) + m + 1
            if _accept(g, m, n, rho_low, rho_high):
                moved = True
        if not moved:
            m = int(low[-1])
            if m + 1 >= M - mh + 1:
                n = int(np.flatnonzero(delta[:m])[-1])
                if _accept(g, m, n, rho_low, rho_high):
                    moved = True
        if not moved:
            break
        delta[m], delta[n] = True, False
        g[m], g[n] = rho_high, rho_low
        swaps += 1
    return delta, swaps


def _accept(g, m, n, rho_low, rho_high):
    gain = swap_gain(g, m, n, rho_low, rho_high)
    return gain > 1e-12 * max(1.0, float(_scores(g[None, :], np.arange(g.size, dtype=float))[0]))
