"""Fisher information and Cramer-Rao bounds for high-precision, one-bit and mixed data.

Parameter ordering is fixed for every FIM builder:
``[omega_1..omega_K, Re vec(S), Im vec(S), (sigma)]`` with ``vec`` column-major
over (k, n), i.e. entry ``k + K*n``.
"""
import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .array_model import steering_matrix

log = logging.getLogger(__name__)

__all__ = [
    "ParamLayout",
    "FisherMatrix",
    "CrbReport",
    "SingularFim",
    "DegenerateArray",
    "steering_derivative",
    "khatri_rao",
    "build_U",
    "fim_high_precision",
    "b_function",
    "lambda_weights",
    "fim_one_bit",
    "fim_mixed",
    "crb_from_fim",
    "crb_lower_bound_doa",
    "crb_lower_bound_projector",
    "placement_score_S",
    "asymptotic_crb",
    "crb_all_high_asymptotic",
    "crb_all_onebit_asymptotic",
    "omega_var_to_theta_deg2",
    "exact_crb",
    "lower_crb",
    "crb_summary",
]


class SingularFim(np.linalg.LinAlgError):
    pass


class DegenerateArray(ValueError):
    pass


@dataclass(frozen=True)
class ParamLayout:
    K: int
    N: int
    noise_known: bool = True

    @property
    def dim(self):
        return self.K + 2 * self.K * self.N + (0 if self.noise_known else 1)

    @property
    def omega(self):
        return slice(0, self.K)

    @property
    def s_real(self):
        return slice(self.K, self.K + self.K * self.N)

    @property
    def s_imag(self):
        return slice(self.K + self.K * self.N, self.K + 2 * self.K * self.N)

    @property
    def sigma(self):
        if self.noise_known:
            raise AttributeError("layout has no sigma entry")
        return self.dim - 1


@dataclass(frozen=True)
class FisherMatrix:
    entries: np.ndarray
    layout: ParamLayout

    def __add__(self, other):
        if self.layout != other.layout:
            raise ValueError("layouts differ")
        return FisherMatrix(self.entries + other.entries, self.layout)


@dataclass(frozen=True)
class CrbReport:
    matrix: np.ndarray
    layout: ParamLayout
    condition_number: float

    @property
    def doa_block(self):
        return self.matrix[self.layout.omega, self.layout.omega]

    @property
    def doa_variances(self):
        """Per-target bounds in squared radians of electrical angle."""
        return np.diag(self.doa_block).copy()

    def doa_variances_deg2(self, angles_deg):
        return omega_var_to_theta_deg2(self.doa_variances, angles_deg)


def omega_var_to_theta_deg2(var_omega, angles_deg):
    """Map variance of omega = pi sin(theta) to variance of theta in degrees^2."""
    jac = np.pi * np.cos(np.deg2rad(np.asarray(angles_deg, dtype=float)))
    return np.asarray(var_omega) / jac ** 2 * (180.0 / np.pi) ** 2


def steering_derivative(config, omegas):
    """d a(omega) / d omega, entries i * 2 d/lambda * m * exp(i 2 d/lambda m omega)."""
    A = steering_matrix(config, omegas)
    m = np.arange(config.M)[:, None]
    return 1j * 2.0 * config.d_over_lambda * m * A


def khatri_rao(B, C):
    """Column-wise Kronecker product: column k is kron(B[:, k], C[:, k])."""
    B = np.asarray(B)
    C = np.asarray(C)
    if B.shape[1] != C.shape[1]:
        raise ValueError("Khatri-Rao operands need the same number of columns")
    return (B[:, None, :] * C[None, :, :]).reshape(B.shape[0] * C.shape[0], B.shape[1])


def build_U(A, Adot, S, layout, residual=None, sigma=None):
    """Conjugated Jacobian of vec(A S) w.r.t. the parameters, one row per parameter.

    For unknown noise (``layout.noise_known`` false) the extra row is
    ``-conj(residual)/sigma`` with ``residual = vec(A S - H)``; it is the
    derivative, w.r.t. sigma, of the threshold-centred mean once expressed in the
    same units as the other rows.
    """
    A = np.asarray(A)
    Adot = np.asarray(Adot)
    S = np.asarray(S)
    M, K = A.shape
    if Adot.shape != (M, K) or S.shape[0] != K:
        raise ValueError("A, Adot and S have inconsistent shapes")
    N = S.shape[1]
    if (layout.K, layout.N) != (K, N):
        raise ValueError("layout does not match A/S dimensions")
    delta = khatri_rao(S.T, Adot)
    G = np.kron(np.eye(N), A)
    rows = [delta.conj().T, G.conj().T, (1j * G).conj().T]
    if not layout.noise_known:
        if residual is None or sigma is None:
            raise ValueError("unknown-noise layout needs residual and sigma")
        rows.append(-np.conj(np.ravel(residual, order="F"))[None, :] / sigma)
    return np.vstack(rows)


def _check_sigma(sigma):
    sigma = float(sigma)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return sigma


def fim_high_precision(U, sigma, layout, columns=None):
    """(2/sigma^2) Re{U U^H}; unknown noise adds a decoupled 4 N M'/sigma^2 corner.

    ``columns`` optionally restricts to a boolean mask over the M N data entries
    (the high-precision antennas); M' counts the retained antennas.
    """
    sigma = _check_sigma(sigma)
    Ud = U[:layout.K + 2 * layout.K * layout.N]
    if columns is not None:
        Ud = Ud[:, columns]
    F = np.zeros((layout.dim, layout.dim))
    d = Ud.shape[0]
    F[:d, :d] = 2.0 / sigma ** 2 * (Ud @ Ud.conj().T).real
    if not layout.noise_known:
        n_entries = Ud.shape[1]
        F[-1, -1] = 2.0 / sigma ** 2 * 2.0 * n_entries
    return FisherMatrix(_sym(F), layout)


def b_function(x):
    """[1/Phi(x) + 1/Phi(-x)] exp(-x^2), evaluated without overflow."""
    return kernels.b_function(x)


def lambda_weights(A, S, H, sigma):
    """Complex weights B(Re z / (sigma/sqrt2)) + i B(Im z / (sigma/sqrt2)), z = vec(A S - H)."""
    sigma = _check_sigma(sigma)
    H = getattr(H, "entries", H)
    z = np.ravel(np.asarray(A) @ np.asarray(S) - np.asarray(H), order="F")
    scale = sigma / np.sqrt(2.0)
    return b_function(z.real / scale) + 1j * b_function(z.imag / scale)


def fim_one_bit(U, lam, sigma, layout, columns=None):
    """(1/(pi sigma^2)) (U_R diag(Re lam) U_R^T + U_I diag(Im lam) U_I^T)."""
    sigma = _check_sigma(sigma)
    lam = np.asarray(lam)
    if U.shape[0] != layout.dim or U.shape[1] != lam.size:
        raise ValueError("U and lambda shapes do not match the layout")
    if columns is not None:
        U = U[:, columns]
        lam = lam[columns]
    Ur, Ui = U.real, U.imag
    F = (Ur * lam.real) @ Ur.T + (Ui * lam.imag) @ Ui.T
    return FisherMatrix(_sym(F / (np.pi * sigma ** 2)), layout)


def fim_mixed(A, Adot, S, H, sigma, placement, layout):
    """FIM of mixed data: high-precision term on delta rows plus one-bit term on the rest."""
    if placement.M == 0:
        raise ValueError("empty array")
    sigma = _check_sigma(sigma)
    H = np.asarray(getattr(H, "entries", H))
    residual = np.asarray(A) @ np.asarray(S) - H
    U = build_U(A, Adot, S, layout, residual=residual, sigma=sigma)
    hp_cols = np.tile(placement.delta, layout.N)
    F = fim_high_precision(U, sigma, layout, columns=hp_cols)
    if placement.M1:
        lam = lambda_weights(A, S, H, sigma)
        F = F + fim_one_bit(U, lam, sigma, layout, columns=~hp_cols)
    return F


def _sym(F):
    return 0.5 * (F + F.T)


def crb_from_fim(F, rcond=1e-12):
    """Invert a FIM via its eigendecomposition; refuses near-singular input."""
    entries = F.entries if isinstance(F, FisherMatrix) else np.asarray(F, dtype=float)
    layout = F.layout if isinstance(F, FisherMatrix) else None
    w, V = np.linalg.eigh(_sym(entries))
    wmax = w[-1]
    if not wmax > 0 or w[0] < rcond * wmax:
        raise SingularFim(f"FIM is singular: eigenvalue range [{w[0]:.3e}, {wmax:.3e}]")
    inv = (V / w) @ V.T
    return CrbReport(_sym(inv), layout, float(wmax / w[0]))


def crb_lower_bound_doa(A, Adot, P_hat, placement, sigma, N):
    """K x K lower-bound CRB of omega from the threshold-free FIM upper bound.

    (sigma^2 / 2N) Re{(Adot^H Omega Adot) o P^T}^-1 with
    Omega = W - W A (A^H W A)^-1 A^H W and W = diag(g).
    """
    sigma = _check_sigma(sigma)
    A = np.asarray(A)
    Adot = np.asarray(Adot)
    w = placement.g
    WA = w[:, None] * A
    WAdot = w[:, None] * Adot
    gram = A.conj().T @ WA
    inner = Adot.conj().T @ WAdot - (Adot.conj().T @ WA) @ np.linalg.solve(gram, WA.conj().T @ Adot)
    J = (inner * np.asarray(P_hat).T).real
    try:
        return sigma ** 2 / (2.0 * N) * np.linalg.inv(J)
    except np.linalg.LinAlgError as exc:
        raise SingularFim(str(exc)) from exc


def crb_lower_bound_projector(A, Adot, S, placement, sigma):
    """Same bound built from the explicit projector onto the complement of G-bar."""
    A = np.asarray(A)
    S = np.asarray(S)
    K, N = S.shape
    root = np.sqrt(np.tile(placement.g, N))
    dbar = root[:, None] * khatri_rao(S.T, np.asarray(Adot))
    gbar = np.kron(np.eye(N), np.sqrt(placement.g)[:, None] * A)
    proj = np.eye(gbar.shape[0]) - gbar @ np.linalg.solve(gbar.conj().T @ gbar, gbar.conj().T)
    return sigma ** 2 / 2.0 * np.linalg.inv((dbar.conj().T @ proj @ dbar).real)


def placement_score_S(g, form="moments"):
    """Placement score sum_{i<j} g_i g_j (j - i)^2.

    ``form="moments"`` uses sum g (i-1)^2 * sum g - (sum g (i-1))^2;
    ``form="pairwise"`` sums the pair terms directly.
    """
    g = np.asarray(g, dtype=float)
    i = np.arange(g.size, dtype=float)
    if form == "moments":
        return float((g * i * i).sum() * g.sum() - (g * i).sum() ** 2)
    if form == "pairwise":
        d2 = (i[None, :] - i[:, None]) ** 2
        return float(0.5 * g @ d2 @ g)
    raise ValueError(f"unknown form {form!r}")


def asymptotic_crb(placement, snrs, N, d_over_lambda=0.5):
    """Large-M per-target bound sum(g) / (2 N S SNR_k), SNR in linear units."""
    if placement.M < 2:
        raise DegenerateArray("asymptotic CRB needs at least two antennas")
    g = placement.g
    S = placement_score_S(g)
    snrs = np.atleast_1d(np.asarray(snrs, dtype=float))
    return g.sum() / (2.0 * N * S * snrs) / (2.0 * d_over_lambda) ** 2


def crb_all_high_asymptotic(M, snrs, N):
    if M < 2:
        raise DegenerateArray("asymptotic CRB needs at least two antennas")
    return 6.0 / (N * M * (M ** 2 - 1)) / np.atleast_1d(np.asarray(snrs, dtype=float))


def crb_all_onebit_asymptotic(M, snrs, N):
    return np.pi / 2.0 * crb_all_high_asymptotic(M, snrs, N)


def exact_crb(config, omegas, S, H, sigma, placement, noise_known=False):
    """Exact CRB report for given targets, waveforms and thresholds."""
    A = steering_matrix(config, omegas)
    Adot = steering_derivative(config, omegas)
    layout = ParamLayout(len(np.atleast_1d(omegas)), np.asarray(S).shape[1], noise_known)
    return crb_from_fim(fim_mixed(A, Adot, S, H, sigma, placement, layout))


def lower_crb(config, omegas, S, sigma, placement):
    A = steering_matrix(config, omegas)
    Adot = steering_derivative(config, omegas)
    S = np.asarray(S)
    P_hat = S @ S.conj().T / S.shape[1]
    return crb_lower_bound_doa(A, Adot, P_hat, placement, sigma, S.shape[1])


def crb_summary(config, omegas, S, H, sigma, placement, noise_known=False, flag_ratio=0.2):
    """Per-target (exact, lower, asymptotic) omega bounds.

    Logs a warning when the asymptotic and lower bounds differ by more than
    ``flag_ratio`` (closely spaced targets break the diagonal approximation).
    """
    S = np.asarray(S)
    K, N = S.shape
    try:
        exact = exact_crb(config, omegas, S, H, sigma, placement, noise_known).doa_variances
    except SingularFim:
        exact = np.full(K, np.nan)
    lower = np.diag(lower_crb(config, omegas, S, sigma, placement))
    snrs = np.sum(np.abs(S) ** 2, axis=1) / (N * sigma ** 2)
    asym = asymptotic_crb(placement, snrs, N, config.d_over_lambda)
    rel = np.abs(asym - lower) / lower
    if np.any(rel > flag_ratio):
        log.warning("asymptotic and lower-bound CRB disagree by up to %.0f%%", 100 * rel.max())
    return exact, lower, asym
