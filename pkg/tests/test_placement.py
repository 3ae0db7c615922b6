from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixedadc.array_model import ONE_BIT_COEFF, Placement
from mixedadc.crb import placement_score_S
from mixedadc.placement import (PlacementProblem, TooLarge, exhaustive_oracle, front_gain_db, is_mirror,
                                optimal_edge_placement, performance_efficiency, swap_optimize,
                                two_precision_optimize)


def brute_force(M, M0, rl=ONE_BIT_COEFF, rh=1.0):
    """Plain-python enumeration, first maximiser in combinations() order."""
    best, best_idx = -1.0, None
    for idx in combinations(range(M), M0):
        g = [rh if i in idx else rl for i in range(M)]
        s = sum(g[i] * g[j] * (j - i) ** 2 for i in range(M) for j in range(i + 1, M))
        if s > best + 1e-12 * abs(best):
            best, best_idx = s, idx
    return best, best_idx


def test_edge_placement_m64_m010():
    sol = optimal_edge_placement(64, 10)
    assert np.flatnonzero(sol.delta.delta).tolist() == [0, 1, 2, 3, 4, 59, 60, 61, 62, 63]
    assert sol.method == "edges-closed-form"
    assert sol.score == pytest.approx(placement_score_S(sol.delta.g), rel=1e-12)


def test_edge_placement_extremes():
    assert not optimal_edge_placement(7, 0).delta.delta.any()
    assert optimal_edge_placement(7, 7).delta.delta.all()


def test_swap_from_front_reaches_edges():
    sol = swap_optimize(Placement.front(64, 10))
    assert sol.delta == optimal_edge_placement(64, 10).delta
    assert sol.swaps > 0


def test_swap_fixed_point():
    sol = swap_optimize(Placement.edges(20, 6))
    assert sol.swaps == 0
    assert sol.delta == Placement.edges(20, 6)


def test_swap_random_initial_m8():
    best, _ = brute_force(8, 3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = np.zeros(8, bool)
        d[rng.choice(8, 3, replace=False)] = True
        assert swap_optimize(Placement(d)).score == pytest.approx(best, rel=1e-12)


def test_exhaustive_examples():
    assert np.flatnonzero(exhaustive_oracle(4, 2).delta.delta).tolist() == [0, 3]
    assert np.flatnonzero(exhaustive_oracle(2, 1).delta.delta).tolist() == [0]
    with pytest.raises(TooLarge):
        exhaustive_oracle(64, 10)


@pytest.mark.parametrize("M", [6, 8, 10])
def test_exhaustive_matches_brute_force_and_edges(M):
    for M0 in range(M + 1):
        ex = exhaustive_oracle(M, M0)
        best, idx = brute_force(M, M0)
        assert ex.score == pytest.approx(best, rel=1e-12)
        assert np.flatnonzero(ex.delta.delta).tolist() == list(idx)
        assert is_mirror(ex.delta, optimal_edge_placement(M, M0).delta)


def test_two_precision_specialises_to_swap():
    init = Placement.middle(16, 5)
    a = two_precision_optimize(16, 11, 5, ONE_BIT_COEFF, 1.0, initial=init.delta)
    b = swap_optimize(init)
    assert a.delta == b.delta and a.score == b.score


def test_two_precision_general_coefficients():
    best, idx = brute_force(8, 3, 0.8, 0.95)
    sol = two_precision_optimize(8, 5, 3, 0.8, 0.95)
    assert sol.score == pytest.approx(best, rel=1e-12)
    ex = exhaustive_oracle(8, 3, 0.8, 0.95)
    assert ex.score == pytest.approx(best, rel=1e-12)


def test_two_precision_uniform_coefficients():
    rho, M = 0.9, 10
    sol = two_precision_optimize(M, 6, 4, rho, rho)
    assert sol.score == pytest.approx(rho ** 2 * M * M * (M * M - 1) / 12, rel=1e-12)
    assert sol.swaps == 0


def test_two_precision_rejects_bad_input():
    with pytest.raises(ValueError):
        two_precision_optimize(8, 4, 3, 0.8, 0.9)
    with pytest.raises(ValueError):
        two_precision_optimize(8, 5, 3, 0.95, 0.8)
    with pytest.raises(ValueError):
        PlacementProblem(8, 9)


def test_efficiency_endpoints_and_monotone():
    rows = performance_efficiency(64, range(65), 10.0, 5)
    assert rows[-1] == (1.0, 1.0)
    assert rows[0][1] == pytest.approx(2 / np.pi, abs=1e-12)
    eta = np.array([r[1] for r in rows])
    assert np.all(np.diff(eta) >= -1e-15)


def test_efficiency_exact_mode():
    rows = performance_efficiency(16, [0, 4, 16], 10.0, 3, mode="exact")
    assert rows[-1][1] == 1.0
    assert 0 < rows[0][1] < rows[1][1] < 1.0
    with pytest.raises(ValueError):
        performance_efficiency(16, [1], 1.0, 1, mode="other")


def test_front_gain():
    assert front_gain_db(64, 10, Placement.front(64, 10)) == pytest.approx(0.0)

    def s_loop(idx):
        g = [1.0 if i in idx else ONE_BIT_COEFF for i in range(64)]
        return sum(g[i] * g[j] * (j - i) ** 2 for i in range(64) for j in range(i + 1, 64))

    ref = 10 * np.log10(s_loop(set(range(5)) | set(range(59, 64))) / s_loop(set(range(10))))
    assert front_gain_db(64, 10, Placement.edges(64, 10).delta) == pytest.approx(ref, rel=1e-10)
    assert ref > 0


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 48), st.data())
def test_swap_steps_never_decrease_score(M, data):
    d = np.array(data.draw(st.lists(st.booleans(), min_size=M, max_size=M)))
    start = Placement(d)
    final = swap_optimize(start)
    prev = placement_score_S(start.g)
    for k in range(1, final.swaps + 1):
        s = swap_optimize(start, max_swaps=k).score
        assert s > prev
        prev = s
    assert final.score == pytest.approx(prev)
    assert final.delta.M0 == start.M0


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 64), st.data())
def test_score_mirror_symmetric(M, data):
    d = np.array(data.draw(st.lists(st.booleans(), min_size=M, max_size=M)))
    assert placement_score_S(Placement(d).g) == pytest.approx(placement_score_S(Placement(d[::-1]).g),
                                                              rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 64), st.data())
def test_single_upgrade_inequality(M, data):
    d = np.array(data.draw(st.lists(st.booleans(), min_size=M, max_size=M)))
    if d.all():
        return
    i = data.draw(st.sampled_from(np.flatnonzero(~d).tolist()))
    up = d.copy()
    up[i] = True
    M0, M1 = d.sum(), (~d).sum()
    S = placement_score_S(Placement(d).g)
    S2 = placement_score_S(Placement(up).g)
    lhs = S2 / (M0 + 1 + ONE_BIT_COEFF * (M1 - 1))
    rhs = S / (M0 + ONE_BIT_COEFF * M1)
    assert lhs >= rhs * (1 - 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(13, 64), st.data())
def test_swap_matches_edges_for_large_M(M, data):
    M0 = data.draw(st.integers(0, M))
    d = np.zeros(M, bool)
    d[np.random.default_rng(M * 100 + M0).choice(M, M0, replace=False)] = True
    sol = swap_optimize(Placement(d))
    assert sol.score == pytest.approx(optimal_edge_placement(M, M0).score, rel=1e-12)
