"""Mixed-ADC uniform linear array: snapshots, thresholds and quantized data."""
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ArrayConfig",
    "SourceScenario",
    "ThresholdMatrix",
    "Placement",
    "MixedObservation",
    "ONE_BIT_COEFF",
    "substream",
    "steering_matrix",
    "synthesize_snapshots",
    "generate_thresholds",
    "one_bit_quantize",
    "mixed_sample",
    "snr_db",
    "sigma_from_snr_db",
    "default_p_o",
    "source_waveforms",
    "simulate",
]

ONE_BIT_COEFF = 2.0 / np.pi

# independent RNG substreams, keyed by purpose
_STREAMS = {"noise": 0, "threshold": 1, "waveform": 2, "placement": 3}


def substream(seed, name):
    """Generator for the named substream of ``seed``.

    Streams are independent: drawing thresholds never shifts the noise draws.
    ``seed`` may be an int or a ``SeedSequence``.
    """
    if isinstance(seed, np.random.SeedSequence):
        base = seed
    else:
        base = np.random.SeedSequence(int(seed))
    child = np.random.SeedSequence(base.entropy, spawn_key=base.spawn_key + (_STREAMS[name],))
    return np.random.default_rng(child)


@dataclass(frozen=True)
class ArrayConfig:
    num_elements: int
    d_over_lambda: float = 0.5

    def __post_init__(self):
        if int(self.num_elements) < 1:
            raise ValueError("num_elements must be >= 1")
        if not self.d_over_lambda > 0:
            raise ValueError("d_over_lambda must be positive")

    @property
    def M(self):
        return int(self.num_elements)


@dataclass(frozen=True)
class SourceScenario:
    angles_deg: tuple
    powers: tuple
    num_snapshots: int

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles_deg)
        powers = tuple(float(p) for p in self.powers)
        object.__setattr__(self, "angles_deg", angles)
        object.__setattr__(self, "powers", powers)
        if len(angles) < 1 or len(angles) != len(powers):
            raise ValueError("need K >= 1 angles with one power each")
        if any(not -90.0 < a < 90.0 for a in angles):
            raise ValueError("angles must lie in (-90, 90) degrees")
        if len(set(angles)) != len(angles):
            raise ValueError("angles must be distinct")
        if any(p <= 0 for p in powers):
            raise ValueError("powers must be positive")
        if int(self.num_snapshots) < 1:
            raise ValueError("num_snapshots must be >= 1")

    @property
    def K(self):
        return len(self.angles_deg)

    @property
    def N(self):
        return int(self.num_snapshots)

    @property
    def omegas(self):
        """Electrical angles pi*sin(theta)."""
        return np.pi * np.sin(np.deg2rad(np.asarray(self.angles_deg)))


@dataclass(frozen=True)
class ThresholdMatrix:
    entries: np.ndarray
    p_o: float

    @property
    def levels(self):
        """The 8-point grid both quadrature parts are drawn from."""
        h = np.sqrt(self.p_o)
        return np.linspace(-h, h, 8)


@dataclass(frozen=True)
class Placement:
    """ADC precision per antenna; ``delta[i]`` is True for high precision.

    ``rho_low``/``rho_high`` are the per-antenna coefficients entering the
    placement score (2/pi for one-bit, 1 for unquantized by default).
    """

    delta: np.ndarray
    rho_low: float = ONE_BIT_COEFF
    rho_high: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.delta, dtype=bool).copy()
        d.setflags(write=False)
        object.__setattr__(self, "delta", d)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("delta must be a non-empty 1-D vector")
        if not self.rho_low <= self.rho_high:
            raise ValueError("rho_low must not exceed rho_high")

    @property
    def M(self):
        return self.delta.size

    @property
    def M0(self):
        return int(self.delta.sum())

    @property
    def M1(self):
        return self.M - self.M0

    @property
    def kappa(self):
        return self.M0 / self.M

    @property
    def g(self):
        return np.where(self.delta, self.rho_high, self.rho_low)

    @property
    def high_rows(self):
        return np.flatnonzero(self.delta)

    @property
    def onebit_rows(self):
        return np.flatnonzero(~self.delta)

    def __eq__(self, other):
        if not isinstance(other, Placement):
            return NotImplemented
        return (np.array_equal(self.delta, other.delta) and self.rho_low == other.rho_low
                and self.rho_high == other.rho_high)

    def __hash__(self):
        return hash((self.delta.tobytes(), self.rho_low, self.rho_high))

    @classmethod
    def all_high(cls, M):
        return cls(np.ones(M, dtype=bool))

    @classmethod
    def all_onebit(cls, M):
        return cls(np.zeros(M, dtype=bool))

    @classmethod
    def front(cls, M, M0):
        d = np.zeros(M, dtype=bool)
        d[:M0] = True
        return cls(d)

    @classmethod
    def middle(cls, M, M0):
        d = np.zeros(M, dtype=bool)
        start = (M - M0) // 2
        d[start:start + M0] = True
        return cls(d)

    @classmethod
    def edges(cls, M, M0):
        """Larger half at the start, remainder at the end of the array."""
        _check_count(M, M0)
        d = np.zeros(M, dtype=bool)
        mh = (M0 + 1) // 2
        d[:mh] = True
        if M0 - mh:
            d[M - (M0 - mh):] = True
        return cls(d)

    @classmethod
    def from_mode(cls, mode, M, M0=None, delta=None):
        if mode == "explicit":
            if delta is None:
                raise ValueError("explicit placement needs delta")
            d = np.asarray(delta, dtype=bool)
            if d.size != M:
                raise ValueError(f"delta has {d.size} entries, expected {M}")
            return cls(d)
        builders = {"edges": cls.edges, "front": cls.front, "middle": cls.middle}
        if mode in ("high", "all-high"):
            return cls.all_high(M)
        if mode in ("onebit", "all-onebit"):
            return cls.all_onebit(M)
        if mode not in builders:
            raise ValueError(f"unknown placement mode {mode!r}")
        _check_count(M, M0)
        return builders[mode](M, int(M0))


def _check_count(M, M0):
    if M0 is None or not 0 <= int(M0) <= M:
        raise ValueError(f"M0 must be in [0, {M}], got {M0}")


@dataclass(frozen=True)
class MixedObservation:
    y_high: np.ndarray
    y_onebit: np.ndarray
    placement: Placement
    thresholds: ThresholdMatrix
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def N(self):
        return self.y_high.shape[1] if self.y_high.size else self.y_onebit.shape[1]

    @property
    def M(self):
        return self.placement.M

    @property
    def h_onebit(self):
        return self.thresholds.entries[self.placement.onebit_rows]

    def full(self):
        """Recombined M x N matrix with high-precision and sign rows in place."""
        Y = np.empty((self.M, self.N), dtype=complex)
        Y[self.placement.high_rows] = self.y_high
        Y[self.placement.onebit_rows] = self.y_onebit
        return Y


def steering_matrix(config, omegas):
    """M x K matrix with entries exp(i * 2 d/lambda * m * omega_k), m = 0..M-1."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    m = np.arange(config.M)[:, None]
    return np.exp(1j * 2.0 * config.d_over_lambda * m * omegas[None, :])


def source_waveforms(scenario, random_phase=False, seed=None):
    """K x N waveforms sqrt(p/2)(1+i), optionally with random unit phases."""
    amp = np.sqrt(np.asarray(scenario.powers) / 2.0)[:, None] * (1 + 1j)
    S = np.repeat(amp, scenario.N, axis=1)
    if random_phase:
        rng = substream(0 if seed is None else seed, "waveform")
        S = S * np.exp(1j * rng.uniform(0, 2 * np.pi, size=S.shape))
    return S


def synthesize_snapshots(config, scenario, sigma, seed, random_phase=False):
    """Noisy array output X = A S + E.

    Returns ``(X, S)``. Noise entries are circular complex Gaussian with variance
    ``sigma**2``.
    """
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma < 0:
        raise ValueError(f"sigma must be finite and >= 0, got {sigma}")
    A = steering_matrix(config, scenario.omegas)
    S = source_waveforms(scenario, random_phase=random_phase, seed=seed)
    rng = substream(seed, "noise")
    shape = (config.M, scenario.N)
    E = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * (sigma / np.sqrt(2.0))
    return A @ S + E, S


def generate_thresholds(config, N, p_o, seed):
    """Antenna-varying thresholds on the 8-level grid spanning [-sqrt(p_o), sqrt(p_o)]."""
    p_o = float(p_o)
    if not p_o > 0:
        raise ValueError(f"p_o must be positive, got {p_o}")
    levels = np.linspace(-np.sqrt(p_o), np.sqrt(p_o), 8)
    rng = substream(seed, "threshold")
    re = rng.integers(0, 8, size=(config.M, N))
    im = rng.integers(0, 8, size=(config.M, N))
    return ThresholdMatrix(levels[re] + 1j * levels[im], p_o)


def _sign(x):
    return np.where(x >= 0, 1.0, -1.0)


def one_bit_quantize(X, H):
    """sign(Re(X-H)) + i sign(Im(X-H)) with sign(0) = +1."""
    X = np.asarray(X)
    H = np.asarray(H.entries if isinstance(H, ThresholdMatrix) else H)
    if X.shape != H.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {H.shape}")
    D = X - H
    return _sign(D.real) + 1j * _sign(D.imag)


def mixed_sample(X, Z, placement, thresholds=None):
    X = np.asarray(X)
    Z = np.asarray(Z)
    if X.shape != Z.shape or X.shape[0] != placement.M:
        raise ValueError("X, Z and placement are inconsistent")
    if thresholds is None:
        thresholds = ThresholdMatrix(np.zeros_like(X, dtype=complex), 1.0)
    elif not isinstance(thresholds, ThresholdMatrix):
        thresholds = ThresholdMatrix(np.asarray(thresholds, dtype=complex), 1.0)
    return MixedObservation(
        y_high=X[placement.high_rows].astype(complex),
        y_onebit=Z[placement.onebit_rows].astype(complex),
        placement=placement,
        thresholds=thresholds,
    )


def snr_db(S, sigma):
    """Per-source SNR in dB: 10 log10(sum_n |s_k(n)|^2 / (N sigma^2))."""
    sigma = float(sigma)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    S = np.atleast_2d(np.asarray(S))
    return 10.0 * np.log10(np.sum(np.abs(S) ** 2, axis=1) / (S.shape[1] * sigma ** 2))


def sigma_from_snr_db(snr, power=1.0):
    return float(np.sqrt(power / 10.0 ** (snr / 10.0)))


def default_p_o(powers, sigma):
    """Average received power per antenna, used as threshold scale."""
    return float(np.sum(powers) + sigma ** 2)


def simulate(config, scenario, placement, sigma, seed, p_o=None, threshold_seed=None,
             random_phase=False):
    """Full pipeline: snapshots, thresholds, quantization and row split."""
    X, S = synthesize_snapshots(config, scenario, sigma, seed, random_phase=random_phase)
    if p_o is None:
        p_o = default_p_o(scenario.powers, sigma)
    H = generate_thresholds(config, scenario.N, p_o, seed if threshold_seed is None else threshold_seed)
    Z = one_bit_quantize(X, H)
    obs = mixed_sample(X, Z, placement, H)
    obs.meta.update(sigma=sigma, seed=seed)
    return obs, S
