"""Scoring, optimisation and efficiency analysis of mixed-precision ADC placements."""
from dataclasses import dataclass
from math import comb

import numpy as np

from . import kernels
from .array_model import ONE_BIT_COEFF, ArrayConfig, Placement, SourceScenario, default_p_o
from .array_model import generate_thresholds, source_waveforms
from .crb import asymptotic_crb, exact_crb, placement_score_S

__all__ = [
    "PlacementProblem",
    "PlacementSolution",
    "TooLarge",
    "optimal_edge_placement",
    "swap_optimize",
    "exhaustive_oracle",
    "two_precision_optimize",
    "performance_efficiency",
    "is_mirror",
    "front_gain_db",
]

EXHAUSTIVE_BUDGET = 10 ** 6


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class PlacementProblem:
    M: int
    M_high: int
    rho_low: float = ONE_BIT_COEFF
    rho_high: float = 1.0

    def __post_init__(self):
        if not 0 <= self.M_high <= self.M:
            raise ValueError("class counts must sum to M")
        if not self.rho_low <= self.rho_high:
            raise ValueError("coefficients must satisfy rho_low <= rho_high")

    @property
    def M_low(self):
        return self.M - self.M_high

    @property
    def M_h(self):
        return (self.M_high + 1) // 2


@dataclass(frozen=True)
class PlacementSolution:
    delta: Placement
    score: float
    method: str
    swaps: int = 0


def _solution(delta, rho_low, rho_high, method, swaps=0):
    p = Placement(delta, rho_low=rho_low, rho_high=rho_high)
    return PlacementSolution(p, placement_score_S(p.g), method, swaps)


def optimal_edge_placement(M, M0, rho_low=ONE_BIT_COEFF, rho_high=1.0):
    """High-precision ADCs split over both ends, larger half first."""
    d = Placement.edges(M, M0).delta
    return _solution(d, rho_low, rho_high, "edges-closed-form")


def swap_optimize(initial, rho_low=None, rho_high=None, max_swaps=1_000_000):
    """Improve ``initial`` with the two edge-filling swaps until neither raises S.

    Situation 1 moves the leftmost low-precision antenna inside the first
    ``floor((M0+1)/2)`` slots to the nearest high-precision slot on its right;
    situation 2 is the mirror image at the right edge. A swap is applied only
    when it strictly increases S, which also guarantees termination.
    """
    rho_low = initial.rho_low if rho_low is None else rho_low
    rho_high = initial.rho_high if rho_high is None else rho_high
    delta, swaps = kernels.swap_loop(initial.delta, rho_low, rho_high, max_swaps)
    return _solution(delta, rho_low, rho_high, "swap", swaps)


def exhaustive_oracle(M, M0, rho_low=ONE_BIT_COEFF, rho_high=1.0, budget=EXHAUSTIVE_BUDGET):
    """Brute-force maximiser of S; ties go to the lexicographically first index set."""
    n = comb(M, M0)
    if n > budget:
        raise TooLarge(f"C({M}, {M0}) = {n} exceeds budget {budget}")
    delta, _ = kernels.exhaustive_best(M, M0, rho_low, rho_high)
    return _solution(delta, rho_low, rho_high, "exhaustive")


def two_precision_optimize(M, M_p, M_q, rho_p, rho_q, initial=None):
    """Place ``M_q`` antennas of the finer class (coefficient ``rho_q``) among ``M_p`` coarser ones.

    Starts from the finer class packed at the front unless ``initial`` is given.
    """
    if M_p + M_q != M:
        raise ValueError("M_p + M_q must equal M")
    if rho_p > rho_q:
        raise ValueError("rho_p must not exceed rho_q")
    if initial is None:
        initial = Placement.front(M, M_q).delta
    start = Placement(np.asarray(initial, dtype=bool), rho_low=rho_p, rho_high=rho_q)
    return swap_optimize(start)


def is_mirror(a, b):
    a = np.asarray(getattr(a, "delta", a))
    b = np.asarray(getattr(b, "delta", b))
    return bool(np.array_equal(a, b) or np.array_equal(a, b[::-1]))


def front_gain_db(M, M0, delta, rho_low=ONE_BIT_COEFF, rho_high=1.0):
    """Asymptotic-CRB improvement in dB of ``delta`` over the front-block placement."""
    s_front = placement_score_S(Placement(Placement.front(M, M0).delta, rho_low, rho_high).g)
    s = placement_score_S(Placement(getattr(delta, "delta", delta), rho_low, rho_high).g)
    return 10.0 * np.log10(s / s_front)


def performance_efficiency(M, M0_range, snr, N, mode="asymptotic", angles_deg=(10.0,),
                           powers=(1.0,), target=0, seed=0, d_over_lambda=0.5):
    """Efficiency CRB_high / CRB_kappa for edge placements with M0 in ``M0_range``.

    ``snr`` is linear and refers to the first target's power. In ``exact`` mode
    the bounds come from FIM inversion (unknown noise) with thresholds drawn
    from ``seed``; the all-high reference uses the same waveforms.
    Returns a list of ``(kappa, eta)``.
    """
    rows = []
    if mode == "asymptotic":
        ref = asymptotic_crb(Placement.all_high(M), snr, N, d_over_lambda)[0]
        for M0 in M0_range:
            crb = asymptotic_crb(Placement.edges(M, M0), snr, N, d_over_lambda)[0]
            rows.append((M0 / M, float(ref / crb)))
        return rows
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    config = ArrayConfig(M, d_over_lambda)
    scenario = SourceScenario(tuple(angles_deg), tuple(powers), N)
    sigma = float(np.sqrt(scenario.powers[0] / snr))
    S = source_waveforms(scenario)
    H = generate_thresholds(config, N, default_p_o(scenario.powers, sigma), seed)
    ref = exact_crb(config, scenario.omegas, S, H, sigma, Placement.all_high(M)).doa_variances[target]
    for M0 in M0_range:
        crb = exact_crb(config, scenario.omegas, S, H, sigma, Placement.edges(M, M0)).doa_variances[target]
        rows.append((M0 / M, float(ref / crb)))
    return rows
