"""Maximum-likelihood DOA estimation for mixed-ADC data.

Three stages share one likelihood:

* ``slim``: grid-based sparse estimate by majorization-minimization,
* ``relax_refine``: cyclic per-target refinement off the grid,
* ``slim_relax_mbic``: model-order selection over K = 0..K_max.

Internally the SLIM recursion works with ``zeta = sqrt(2)/sigma`` and
``B = zeta * S`` so that the one-bit likelihood is free of the noise scale.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.linalg import blas, lapack

from . import kernels
from .array_model import ArrayConfig, steering_matrix
from .crb import steering_derivative

log = logging.getLogger(__name__)

__all__ = [
    "NonFinite",
    "InsufficientPeaks",
    "AngularGrid",
    "make_grid",
    "SlimState",
    "SlimResult",
    "TargetEstimate",
    "ModelSelection",
    "neg_log_likelihood",
    "neg_log_likelihood_grad",
    "slim",
    "slim_objective",
    "majorizer",
    "majorizer_constant",
    "zeta_update",
    "b_update",
    "peak_pick",
    "relax_refine",
    "mbic",
    "noise_only_fit",
    "slim_relax_mbic",
]

_SQRT2 = math.sqrt(2.0)


class NonFinite(FloatingPointError):
    pass


class InsufficientPeaks(UserWarning):
    pass


# ----------------------------------------------------------------------------
# grid and containers


@dataclass(frozen=True)
class AngularGrid:
    omegas: np.ndarray
    dictionary: np.ndarray

    @property
    def size(self):
        return self.omegas.size

    @property
    def spacing(self):
        return 2.0 * np.pi / self.omegas.size


def make_grid(config, multiplier=10, size=None):
    """Uniform grid over [-pi, pi) with ``multiplier * M`` points unless ``size`` is given."""
    K = int(size) if size is not None else int(multiplier) * config.M
    if K < 1:
        raise ValueError("grid needs at least one point")
    omegas = -np.pi + 2.0 * np.pi * np.arange(K) / K
    return AngularGrid(omegas, steering_matrix(config, omegas))


@dataclass
class SlimState:
    B: np.ndarray
    zeta: float
    P_hat: np.ndarray
    D_hat: np.ndarray
    objective: float


@dataclass
class SlimResult:
    S_hat: np.ndarray
    sigma_hat: float
    spectrum: np.ndarray
    grid: AngularGrid
    objective_history: list
    outer_iterations: int
    inner_iterations: int
    state: SlimState = field(repr=False)


@dataclass
class TargetEstimate:
    omega: float
    waveform: np.ndarray

    @property
    def power(self):
        return float(np.sum(np.abs(self.waveform) ** 2) / self.waveform.size)

    @property
    def theta_deg(self):
        return float(np.rad2deg(np.arcsin(np.clip(self.omega / np.pi, -1.0, 1.0))))


@dataclass
class ModelSelection:
    candidates: dict
    chosen_K: int
    noise_only_extension: bool = True

    @property
    def chosen(self):
        return self.candidates[self.chosen_K]

    def table(self):
        return [{"K": K, "neg_log_lik": c["neg_log_lik"], "mbic": c["mbic"]}
                for K, c in sorted(self.candidates.items())]


# ----------------------------------------------------------------------------
# likelihood


def _split(observation):
    pl = observation.placement
    H1 = observation.h_onebit
    return pl.high_rows, pl.onebit_rows, observation.y_high, observation.y_onebit, H1


def _onebit_args(X1, Y1, H1, sigma):
    scale = _SQRT2 / sigma
    ar = Y1.real * (X1.real - H1.real) * scale
    ai = Y1.imag * (X1.imag - H1.imag) * scale
    return ar, ai


def neg_log_likelihood(omegas, S, sigma, observation, d_over_lambda=0.5):
    """Exact mixed-ADC negative log-likelihood, constants included."""
    return _nll(omegas, S, sigma, observation, d_over_lambda, want_grad=False)[0]


def neg_log_likelihood_grad(omegas, S, sigma, observation, d_over_lambda=0.5):
    """Return ``(value, d/d omega, d/d Re S + i d/d Im S, d/d sigma)``."""
    return _nll(omegas, S, sigma, observation, d_over_lambda, want_grad=True)


def _nll(omegas, S, sigma, observation, d_over_lambda, want_grad):
    sigma = float(sigma)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    S = np.asarray(S, dtype=complex).reshape(omegas.size, -1)
    config = ArrayConfig(observation.M, d_over_lambda)
    A = steering_matrix(config, omegas)
    X = A @ S
    hi, lo, Y0, Y1, H1 = _split(observation)
    N = S.shape[1]
    M0 = hi.size
    total = 0.0
    G = np.zeros_like(X)
    dsigma = 0.0
    if lo.size:
        ar, ai = _onebit_args(X[lo], Y1, H1, sigma)
        if np.isnan(ar).any() or np.isnan(ai).any():
            raise NonFinite("NaN argument inside the one-bit likelihood")
        alpha = np.stack([ar, ai])
        t, fp = kernels.neg_log_ndtr_sum_grad(alpha)
        total += t
        if want_grad:
            scale = _SQRT2 / sigma
            G[lo] = fp[0] * Y1.real * scale + 1j * fp[1] * Y1.imag * scale
            dsigma += float(np.sum(fp * (-alpha / sigma)))
    if M0:
        R0 = Y0 - X[hi]
        r2 = float(np.sum(np.abs(R0) ** 2))
        total += r2 / sigma ** 2 + M0 * N * (math.log(sigma ** 2) + math.log(math.pi))
        if want_grad:
            G[hi] = -2.0 * R0 / sigma ** 2
            dsigma += -2.0 * r2 / sigma ** 3 + 2.0 * M0 * N / sigma
    if not np.isfinite(total):
        raise NonFinite(f"likelihood evaluated to {total}")
    if not want_grad:
        return (total,)
    Adot = steering_derivative(config, omegas)
    gS = A.conj().T @ G
    gw = np.real(np.sum(Adot * (np.conj(G) @ S.T), axis=0))
    return total, gw, gS, dsigma


# ----------------------------------------------------------------------------
# SLIM


def _pseudo_targets(observation):
    """T (high rows: samples, one-bit rows: thresholds) and the matched-filter input."""
    hi, lo, Y0, Y1, H1 = _split(observation)
    M, N = observation.M, observation.N
    T = np.zeros((M, N), dtype=complex)
    T[hi] = Y0
    T[lo] = H1
    Y_init = np.zeros((M, N), dtype=complex)
    Y_init[hi] = Y0
    Y_init[lo] = Y1
    return T, Y_init


def _onebit_gammas(A1, B, zeta, Y1, H1):
    X1 = A1 @ B
    gr = Y1.real * (X1.real - zeta * H1.real)
    gi = Y1.imag * (X1.imag - zeta * H1.imag)
    return gr, gi


def _d_hat(A1, B, zeta, Y1, H1):
    gr, gi = _onebit_gammas(A1, B, zeta, Y1, H1)
    # f(x) = -ln Phi(x), f'(x) = -phi/Phi
    xr = gr + kernels.pdf_over_cdf(gr)
    xi = gi + kernels.pdf_over_cdf(gi)
    return Y1.real * xr + 1j * Y1.imag * xi


def _psi(x, q, tau):
    """Floored sparsity penalty per row energy ``x``: concave, C1, linear below tau."""
    x = np.asarray(x, dtype=float)
    xc = np.maximum(x, tau)
    if q == 0:
        val = np.log(xc)
        slope = 1.0 / xc
    else:
        val = (2.0 / q) * xc ** (q / 2.0)
        slope = xc ** (q / 2.0 - 1.0)
    return val + slope * np.minimum(x - tau, 0.0), slope


def _p_hat(B, q, tau):
    """Row powers whose inverse gives the penalty majorizer weights."""
    x = np.sum(np.abs(B) ** 2, axis=1)
    _, slope = _psi(x, q, tau)
    return 1.0 / (slope * B.shape[1])


def slim_objective(B, zeta, observation, A, q=0.0, tau=0.0):
    """Penalized negative log-posterior g(B, zeta) without additive constants."""
    hi, lo, Y0, Y1, H1 = _split(observation)
    N = B.shape[1]
    val = 0.0
    if lo.size:
        gr, gi = _onebit_gammas(A[lo], B, zeta, Y1, H1)
        val -= float(np.sum(kernels.log_ndtr(gr)) + np.sum(kernels.log_ndtr(gi)))
    if hi.size:
        val += 0.5 * float(np.sum(np.abs(zeta * Y0 - A[hi] @ B) ** 2)) - 2.0 * hi.size * N * math.log(zeta)
    pen, _ = _psi(np.sum(np.abs(B) ** 2, axis=1), q, tau)
    return val + float(np.sum(pen))


def majorizer(B, zeta, T, Q, P_hat, A, M0):
    """Surrogate G(B, zeta | expansion point) with the expansion point baked into Q and P_hat."""
    N = B.shape[1]
    val = 0.5 * float(np.sum(np.abs(zeta * T + Q - A @ B) ** 2))
    val += float(np.sum(np.sum(np.abs(B) ** 2, axis=1) / P_hat)) / N
    if M0:
        val -= 2.0 * M0 * N * math.log(zeta)
    return val


def majorizer_constant(B, zeta, observation, A, q=0.0, tau=0.0):
    """g - G at the expansion point."""
    hi, lo, Y0, Y1, H1 = _split(observation)
    c = 0.0
    if lo.size:
        g = np.stack(_onebit_gammas(A[lo], B, zeta, Y1, H1))
        fp = kernels.pdf_over_cdf(g)
        c += float(np.sum(-kernels.log_ndtr(g) - 0.5 * fp * fp))
    x = np.sum(np.abs(B) ** 2, axis=1)
    val, slope = _psi(x, q, tau)
    c += float(np.sum(val - slope * x))
    return c


def _build_T_Q(T, D_hat, lo):
    Q = np.zeros_like(T)
    Q[lo] = D_hat
    return Q


def _r_matrix(A, P_hat, N):
    """R = A diag(P_hat) A^H + (2/N) I, upper triangle only."""
    R = blas.zherk(1.0, A * np.sqrt(P_hat))
    R[np.diag_indices_from(R)] += 2.0 / N
    return R


def _chol(R):
    c, info = lapack.zpotrf(R, lower=0, clean=1)
    # R >= (2/N) I, so a failed factorisation means corrupted input
    assert info == 0, f"zpotrf failed with info={info}"
    return c


def _solve(c, X):
    x, info = lapack.zpotrs(c, np.asarray(X, dtype=complex), lower=0)
    assert info == 0
    return x


def _zeta_root(u, v, M0, N, zeta_floor=1e-12):
    assert v > 0, "T must be non-zero"
    c = M0 * N * N
    if c == 0:
        return max(-u / v, zeta_floor)
    disc = math.sqrt(u * u + 4.0 * v * c)
    # the two algebraically equal forms avoid cancellation for either sign of u
    return (disc - u) / (2.0 * v) if u <= 0 else 2.0 * c / (u + disc)


def zeta_update(T, Q, R, M0, N):
    """Minimiser over zeta of the surrogate with B concentrated out.

    Returns ``(zeta, u, v)`` with ``u = Re Tr(T^H R^-1 Q)`` and
    ``v = Tr(T^H R^-1 T)``; zeta is the positive root of
    ``v z^2 + u z - M0 N^2 = 0``. ``R`` may be full or upper-triangular.
    """
    c = _chol(np.triu(R))
    RiT = _solve(c, T)
    u = float(np.real(np.vdot(RiT, Q)))
    v = float(np.real(np.vdot(T, RiT)))
    return _zeta_root(u, v, M0, N), u, v


def b_update(Ytil, A, P_hat, R):
    """B = P A^H R^-1 Ytil, the surrogate minimiser for fixed zeta."""
    return P_hat[:, None] * (A.conj().T @ _solve(_chol(np.triu(R)), Ytil))


def slim(observation, grid=None, q=0.0, eps_outer=1e-6, eps_inner=1e-4, max_outer=50,
         max_inner=50, d_over_lambda=0.5, floor_ratio=1e-12, sigma_floor_ratio=1e-3, record=False):
    """Sparse mixed-ADC spectrum by majorization-minimization.

    Each inner step re-expands the surrogate at the current iterate (P_hat and
    D_hat from the latest B and zeta), solves for zeta with B concentrated out,
    then for B. Both loops stop on the relative change of P_hat.

    zeta is capped so that sigma_hat >= ``sigma_floor_ratio`` times the RMS of
    the pseudo-observation. Without the cap the objective is unbounded below
    whenever the high-precision rows can be fitted exactly with consistent
    one-bit signs, and R becomes numerically singular as zeta diverges. The
    surrogate is unimodal in zeta, so clipping the root keeps the descent.
    """
    config = ArrayConfig(observation.M, d_over_lambda)
    if grid is None:
        grid = make_grid(config)
    A = grid.dictionary
    if A.shape[0] != observation.M:
        raise ValueError("grid dictionary does not match the array size")
    hi, lo, Y0, Y1, H1 = _split(observation)
    M, N = observation.M, observation.N
    M0 = hi.size
    A1 = A[lo]
    AH = np.ascontiguousarray(A.conj().T)
    T, Y_init = _pseudo_targets(observation)

    B = A.conj().T @ Y_init / M
    tn = float(np.sum(np.abs(T) ** 2))
    zeta = math.sqrt(2.0 * M * N / tn) if tn > 0 else 1.0
    zeta_max = _SQRT2 / (sigma_floor_ratio * math.sqrt(tn / (M * N))) if tn > 0 and sigma_floor_ratio > 0 else math.inf
    zeta = min(zeta, zeta_max)
    tau = floor_ratio * float(np.max(np.sum(np.abs(B) ** 2, axis=1)))
    tau = tau if tau > 0 else floor_ratio

    history = [slim_objective(B, zeta, observation, A, q, tau)]
    trace = []
    P = _p_hat(B, q, tau)
    D = _d_hat(A1, B, zeta, Y1, H1) if lo.size else np.zeros((0, N), dtype=complex)
    inner_total = 0
    outer = 0
    for outer in range(1, max_outer + 1):
        P_outer = P
        for t in range(max_inner):
            Q = _build_T_Q(T, D, lo)
            P_prev = P
            P = _p_hat(B, q, tau)
            c = _chol(_r_matrix(A, P, N))
            Z = _solve(c, np.hstack([T, Q]))
            RiT, RiQ = Z[:, :N], Z[:, N:]
            zeta = min(_zeta_root(float(np.real(np.vdot(T, RiQ))), float(np.real(np.vdot(T, RiT))), M0, N),
                       zeta_max)
            B = P[:, None] * (AH @ (zeta * RiT + RiQ))
            if lo.size:
                D = _d_hat(A1, B, zeta, Y1, H1)
            inner_total += 1
            if record:
                trace.append(slim_objective(B, zeta, observation, A, q, tau))
            if t > 0 and _rel(P, P_prev) < eps_inner:
                break
        history.append(slim_objective(B, zeta, observation, A, q, tau))
        P = _p_hat(B, q, tau)
        if _rel(P, P_outer) < eps_outer:
            break
    S_hat = B / zeta
    spectrum = np.sum(np.abs(S_hat) ** 2, axis=1) ** ((2.0 - q) / 2.0) / N
    state = SlimState(B, zeta, P, D, history[-1])
    res = SlimResult(S_hat, _SQRT2 / zeta, spectrum, grid, history, outer, inner_total, state)
    res.tau = tau
    if record:
        res.inner_trace = trace
    return res


def _rel(a, b):
    nb = np.linalg.norm(b)
    return np.linalg.norm(a - b) / nb if nb > 0 else np.inf


# ----------------------------------------------------------------------------
# peaks


def peak_pick(spectrum, K, circular=True):
    """Indices of the K largest strict local maxima, ties going to the lower index.

    Falls back to the K largest values (with a warning) when there are fewer
    than K strict local maxima.
    """
    p = np.asarray(spectrum, dtype=float)
    K = int(K)
    if K < 0 or K > p.size:
        raise ValueError(f"cannot pick {K} peaks from {p.size} points")
    if K == 0:
        return []
    if circular:
        left, right = np.roll(p, 1), np.roll(p, -1)
    else:
        left = np.concatenate([[-np.inf], p[:-1]])
        right = np.concatenate([p[1:], [-np.inf]])
    peaks = np.flatnonzero((p > left) & (p > right))
    # stable sort on -value keeps lower indices first among equals
    order = peaks[np.argsort(-p[peaks], kind="stable")]
    if order.size >= K:
        return [int(i) for i in order[:K]]
    warnings.warn(f"only {order.size} local maxima for K={K}; using the largest values",
                  InsufficientPeaks, stacklevel=2)
    rest = np.argsort(-p, kind="stable")
    picked = list(order)
    for i in rest:
        if len(picked) == K:
            break
        if i not in picked:
            picked.append(i)
    return [int(i) for i in picked]


# ----------------------------------------------------------------------------
# RELAX


def _pack(omega, s, sigma=None):
    x = [np.array([omega]), s.real, s.imag]
    if sigma is not None:
        x.append(np.array([math.log(sigma)]))
    return np.concatenate(x)


def relax_refine(initial, observation, sigma, grid_spacing, d_over_lambda=0.5, tol=1e-6,
                 max_cycles=100, history=None):
    """Cyclic per-target refinement of the exact likelihood.

    Target k is re-optimized over (omega_k, s_k) with the others fixed, and
    sigma is refined together with the first target. omega_k stays inside a
    window of width ``grid_spacing`` centred on its value at the start of the
    cycle. Returns ``(targets, sigma, neg_log_lik)``.
    """
    if len(initial) < 1:
        raise ValueError("need at least one initial target")
    targets = [TargetEstimate(float(t.omega), np.array(t.waveform, dtype=complex)) for t in initial]
    K = len(targets)
    N = targets[0].waveform.size
    sigma = float(sigma)

    def unpack(x, with_sigma):
        s = x[1:1 + N] + 1j * x[1 + N:1 + 2 * N]
        return x[0], s, (math.exp(x[-1]) if with_sigma else None)

    def current():
        return (np.array([t.omega for t in targets]), np.array([t.waveform for t in targets]))

    def nll_all():
        om, S = current()
        return neg_log_likelihood(om, S, sigma, observation, d_over_lambda)

    value = nll_all()
    if history is not None:
        history.append(value)
    half = 0.5 * grid_spacing
    for _ in range(max_cycles):
        start = value
        for k in range(K):
            with_sigma = k == 0
            om, S = current()

            def fun(x):
                w, s, sg = unpack(x, with_sigma)
                om2 = om.copy()
                S2 = S.copy()
                om2[k] = w
                S2[k] = s
                f, gw, gS, gs = neg_log_likelihood_grad(om2, S2, sg if with_sigma else sigma,
                                                        observation, d_over_lambda)
                g = [np.array([gw[k]]), gS[k].real, gS[k].imag]
                if with_sigma:
                    g.append(np.array([gs * sg]))
                return f, np.concatenate(g)

            x0 = _pack(om[k], S[k], sigma if with_sigma else None)
            bounds = [(om[k] - half, om[k] + half)] + [(None, None)] * (2 * N)
            if with_sigma:
                bounds.append((math.log(sigma) - 30.0, math.log(sigma) + 30.0))
            res = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                                    options={"maxiter": 1000, "ftol": 1e-15, "gtol": 1e-10})
            if res.fun < value:
                w, s, sg = unpack(res.x, with_sigma)
                targets[k] = TargetEstimate(float(w), s)
                if with_sigma:
                    sigma = sg
                value = float(res.fun)
        if history is not None:
            history.append(value)
        if abs(start - value) <= tol * abs(start):
            break
    return targets, sigma, value


# ----------------------------------------------------------------------------
# model order


def mbic(neg_log_lik, K, M, N):
    return 2.0 * float(neg_log_lik) + (2 * K * N + 3 * K) * math.log(M * N)


def noise_only_fit(observation):
    """Best sigma and likelihood of the signal-free model by 1-D search in log sigma."""
    N = observation.N
    S0 = np.zeros((1, N), dtype=complex)

    def f(ls):
        return neg_log_likelihood([0.0], S0, math.exp(ls), observation)

    Y0 = observation.y_high
    lo = observation.h_onebit
    scale = float(np.sqrt(np.mean(np.abs(Y0) ** 2))) if Y0.size else float(np.sqrt(np.mean(np.abs(lo) ** 2)) + 1e-3)
    c = math.log(max(scale, 1e-12))
    res = optimize.minimize_scalar(f, bracket=(c - 1.0, c + 1.0))
    if not res.success:  # pragma: no cover
        res = optimize.minimize_scalar(f, bounds=(c - 20.0, c + 20.0), method="bounded")
    return math.exp(res.x), float(res.fun)


def slim_relax_mbic(observation, K_max, grid=None, q=0.0, eps_outer=1e-6, eps_inner=1e-4,
                    max_outer=50, max_inner=50, d_over_lambda=0.5, include_noise_only=True,
                    slim_result=None):
    """Run SLIM once, refine the top-K peaks for K = 1..K_max, pick K by mBIC."""
    if K_max < 1:
        raise ValueError("K_max must be >= 1")
    M, N = observation.M, observation.N
    if slim_result is None:
        slim_result = slim(observation, grid, q, eps_outer, eps_inner, max_outer, max_inner,
                           d_over_lambda)
    grid = slim_result.grid
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", InsufficientPeaks)
        peaks = peak_pick(slim_result.spectrum, K_max)
    cands = {}
    if include_noise_only:
        sg, nll = noise_only_fit(observation)
        cands[0] = {"neg_log_lik": nll, "mbic": mbic(nll, 0, M, N), "targets": [], "sigma": sg}
    for K in range(1, K_max + 1):
        init = [TargetEstimate(float(grid.omegas[r]), slim_result.S_hat[r]) for r in peaks[:K]]
        targets, sg, nll = relax_refine(init, observation, slim_result.sigma_hat, grid.spacing,
                                        d_over_lambda)
        cands[K] = {"neg_log_lik": nll, "mbic": mbic(nll, K, M, N), "targets": targets, "sigma": sg}
    best = min(cands, key=lambda K: (cands[K]["mbic"], K))
    sel = ModelSelection(cands, best, include_noise_only)
    sel.slim = slim_result
    return sel
