import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from aoii.analysis import (
    DegenerateParamsError,
    active_fraction,
    avg_penalty,
    boundary_coin,
    cost_always_update,
    cost_never_update,
    lagrange_cost,
    lambda_intersection,
    policy_cost,
    randomized_threshold,
    stationary,
)
from aoii.model import SystemParams
from oracles import penalty_chain, stationary_of, threshold_pi


@st.composite
def helpful_params(draw):
    """Parameter sets where sending beats idling, with tails that stay modest."""
    n = draw(st.integers(2, 12))
    pr = draw(st.floats(0.05, 0.95))
    ps = draw(st.floats(0.05, 1.0))
    p = SystemParams(n, pr, ps)
    assume(p.p_remain - p.p_transition > 1e-3)
    return p


# Reference values from a dense truncated-chain solve (tests/oracles.py).
def test_always_update_examples():
    assert cost_always_update(SystemParams(2, 0.8, 1.0)) == pytest.approx(0.25, rel=1e-12)
    assert cost_always_update(SystemParams(2, 0.8, 0.8)) == pytest.approx(0.3342245989304811, rel=1e-12)


def test_never_update_example():
    assert cost_never_update(SystemParams(2, 0.5, 0.8)) == pytest.approx(1.0, rel=1e-12)


def test_threshold_one_examples():
    p = SystemParams(2, 0.8, 0.8)
    assert stationary(p, 1).pi0 == pytest.approx(0.7727272727272729, rel=1e-12)
    assert active_fraction(p, 1) == pytest.approx(0.2272727272727272, rel=1e-12)


def test_table_config_threshold_seven():
    p = SystemParams(8, 0.8, 0.8)
    assert avg_penalty(p, 7) == pytest.approx(2.43151652228329, rel=1e-10)
    assert active_fraction(p, 7) == pytest.approx(0.10946743609769294, rel=1e-10)
    assert active_fraction(p, 8) == pytest.approx(0.09961040998899, rel=1e-10)


def test_threshold_zero_is_always_update():
    p = SystemParams(5, 0.7, 0.6)
    assert avg_penalty(p, 0) == cost_always_update(p)
    assert active_fraction(p, 0) == 1.0
    assert lambda_intersection(p, 0) == 0.0


@pytest.mark.parametrize("p", [SystemParams(3, 0.6, 0.9), SystemParams(8, 0.3, 0.5), SystemParams(2, 0.9, 0.2)])
@pytest.mark.parametrize("n", [1, 2, 4, 9])
def test_stationary_matches_dense_chain(p, n):
    size = 1500
    ref = threshold_pi(p.num_states, p.p_remain, p.p_success, n, size)
    got = stationary(p, n).pmf_array(size - 1)
    assert np.max(np.abs(got - ref)) <= 1e-9
    k = np.arange(size)
    assert avg_penalty(p, n) == pytest.approx(ref @ k, rel=1e-9)
    assert active_fraction(p, n) == pytest.approx(ref[n:].sum(), rel=1e-9)


@given(helpful_params(), st.integers(1, 30))
def test_pmf_sums_to_one(p, n):
    d = stationary(p, n)
    assert d.total_mass() == pytest.approx(1.0, abs=1e-12)
    assert d.below_threshold_mass() + d.tail_mass() == pytest.approx(1.0 - d.pi0, abs=1e-12)


@given(helpful_params(), st.integers(0, 40))
def test_monotone_in_threshold(p, n):
    assert active_fraction(p, n + 1) < active_fraction(p, n)
    assert avg_penalty(p, n + 1) >= avg_penalty(p, n) - 1e-12 * avg_penalty(p, n)
    if n >= 1:
        assert stationary(p, n + 1).pi0 <= stationary(p, n).pi0 + 1e-15
        assert lambda_intersection(p, n + 1) >= lambda_intersection(p, n) * (1 - 1e-9)


@given(helpful_params())
def test_threshold_one_costs_like_always(p):
    # At S=0 the action is irrelevant.
    assert avg_penalty(p, 1) == pytest.approx(avg_penalty(p, 0), rel=1e-12)
    assert lambda_intersection(p, 1) > 0


@given(helpful_params(), st.integers(0, 30))
def test_lambda_makes_neighbours_indifferent(p, n):
    lam = lambda_intersection(p, n)
    lo = lagrange_cost(p, n, lam, 0.1)
    hi = lagrange_cost(p, n + 1, lam, 0.1)
    assert lo == pytest.approx(hi, rel=1e-9, abs=1e-12)


def test_idle_optimal_regime():
    p = SystemParams(4, 0.2, 0.8)  # p_t > p_R
    assert not p.transmission_helps
    assert cost_never_update(p) <= cost_always_update(p)


def test_lambda_zero_when_sending_is_useless():
    # p_t == p_R: the threshold still changes power but not the penalty.
    assert lambda_intersection(SystemParams(2, 0.5, 0.8), 3) == pytest.approx(0.0, abs=1e-12)
    assert lambda_intersection(SystemParams(3, 0.5, 0.0), 3) == pytest.approx(0.0, abs=1e-12)


def test_lambda_beyond_float_resolution_rejected():
    with pytest.raises(DegenerateParamsError):
        lambda_intersection(SystemParams(2, 0.5, 0.8), 10**6)


def test_policy_cost_parts():
    p = SystemParams(8, 0.6, 0.8)
    c = policy_cost(p, 5, 2.0, 0.1)
    assert c.penalty_part == avg_penalty(p, 5)
    assert c.lagrange_part == pytest.approx(2.0 * (active_fraction(p, 5) - 0.1))
    assert c.total == pytest.approx(lagrange_cost(p, 5, 2.0, 0.1))
    with pytest.raises(ValueError):
        policy_cost(p, 5, -1.0, 0.1)
    with pytest.raises(ValueError):
        policy_cost(p, 5, 1.0, 0.0)


def test_bad_threshold_rejected():
    p = SystemParams(8, 0.6, 0.8)
    with pytest.raises(ValueError):
        stationary(p, 0)
    with pytest.raises(ValueError):
        avg_penalty(p, -1)


@pytest.mark.parametrize("coins", [[1.0], [0.0], [0.3], [0.3, 0.6], [0.5, 0.5, 0.2]])
def test_randomized_threshold_matches_dense_chain(coins):
    p = SystemParams(6, 0.7, 0.8)
    n0 = 3
    size = 800

    def q(s):
        i = s - n0
        if i < 0:
            return 0.0
        return coins[i] if i < len(coins) else 1.0

    ref = stationary_of(penalty_chain(6, 0.7, 0.8, q, size))
    got = randomized_threshold(p, n0, coins)
    k = np.arange(size)
    assert got.avg_penalty == pytest.approx(ref @ k, rel=1e-9)
    assert got.pi0 == pytest.approx(ref[0], rel=1e-9)
    assert got.active_fraction == pytest.approx(sum(ref[s] * q(s) for s in range(1, size)), rel=1e-9)


def test_randomized_threshold_pure_ends():
    p = SystemParams(6, 0.7, 0.8)
    assert randomized_threshold(p, 4, [1.0]).avg_penalty == pytest.approx(avg_penalty(p, 4), rel=1e-12)
    assert randomized_threshold(p, 4, [0.0]).avg_penalty == pytest.approx(avg_penalty(p, 5), rel=1e-12)
    with pytest.raises(ValueError):
        randomized_threshold(p, 4, [1.5])


@settings(max_examples=200)
@given(helpful_params(), st.integers(0, 25), st.floats(0.0, 1.0))
def test_boundary_coin_hits_budget(p, n0, t):
    hi, lo = active_fraction(p, n0), active_fraction(p, n0 + 1)
    alpha = lo + t * (hi - lo)
    assume(alpha > 0)
    q = boundary_coin(p, n0, alpha)
    assert 0.0 <= q <= 1.0
    got = randomized_threshold(p, n0, [q])
    assert got.active_fraction == pytest.approx(alpha, rel=1e-10, abs=1e-13)
    # Same cost as weighting the two pure thresholds by their budget shares.
    rho = 1.0 if math.isclose(hi, lo) else (alpha - lo) / (hi - lo)
    mixed = rho * avg_penalty(p, n0) + (1 - rho) * avg_penalty(p, n0 + 1)
    assert got.avg_penalty == pytest.approx(mixed, rel=1e-9)


@pytest.mark.parametrize("pr", [0.99, 0.999, 0.9999])
def test_precision_for_slow_sources(pr):
    p = SystemParams(8, pr, 0.7)
    assert avg_penalty(p, 1) == pytest.approx(avg_penalty(p, 0), rel=1e-13)
    costs = [avg_penalty(p, n) for n in range(0, 50)]
    assert all(y >= x * (1 - 1e-13) for x, y in zip(costs, costs[1:]))


def test_long_and_short_sum_branches_agree():
    p = SystemParams(2, 0.9995, 0.5)
    for n in (4096, 4097):
        ref = threshold_pi(2, 0.9995, 0.5, n, n + 400)
        assert active_fraction(p, n) == pytest.approx(ref[n:].sum(), rel=1e-9)
        assert avg_penalty(p, n) == pytest.approx(ref @ np.arange(n + 400), rel=1e-9)
