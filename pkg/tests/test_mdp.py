import numpy as np
import pytest

from aoii.analysis import active_fraction, avg_penalty, cost_always_update, cost_never_update, lambda_intersection
from aoii.mdp import (
    ConvergenceError,
    MdpConfig,
    MdpSolution,
    StructureError,
    extract_threshold,
    solve_lagrangian,
    solve_unconstrained,
)
from aoii.model import SystemParams

GRID = [SystemParams(8, 0.8, 0.8), SystemParams(3, 0.6, 0.5), SystemParams(2, 0.9, 1.0), SystemParams(5, 0.4, 0.3)]


def _lagrangian_gain(p, n, lam):
    return avg_penalty(p, n) + lam * active_fraction(p, n)


def test_unconstrained_transmit_when_wrong():
    p = SystemParams(8, 0.8, 0.8)
    sol = solve_unconstrained(p)
    assert extract_threshold(sol) in (0, 1)
    assert sol.gain == pytest.approx(cost_always_update(p), abs=1e-6)


def test_unconstrained_never_when_sending_hurts():
    p = SystemParams(2, 0.4, 0.8)
    sol = solve_unconstrained(p)
    assert extract_threshold(sol) is None
    assert sol.gain == pytest.approx(cost_never_update(p), abs=1e-6)


def test_useless_channel_gives_equal_actions():
    sol = solve_lagrangian(SystemParams(4, 0.7, 0.0), 0.0, MdpConfig(truncation=200))
    assert np.max(np.abs(sol.action_gap)) == 0.0
    assert not sol.policy.any()


@pytest.mark.parametrize("p", GRID)
def test_value_nondecreasing_and_policy_monotone(p):
    sol = solve_lagrangian(p, 3.0, MdpConfig(truncation=300))
    assert np.all(np.diff(sol.value) >= -1e-9)
    extract_threshold(sol)  # raises on non-monotone policies


@pytest.mark.parametrize("p", GRID)
def test_action_gap_identity(p):
    lam = 2.5
    sol = solve_lagrangian(p, lam, MdpConfig(truncation=300))
    v = sol.value
    s = np.arange(1, len(v) - 1)
    expect = lam + p.p_success * (p.p_transition - p.p_remain) * (v[s + 1] - v[0])
    assert np.max(np.abs(sol.action_gap[s] - expect)) <= 1e-8 * max(1.0, np.abs(v).max())


@pytest.mark.parametrize("p", GRID)
def test_gain_insensitive_to_truncation(p):
    lam = 5.0
    g1 = solve_lagrangian(p, lam, MdpConfig(truncation=500)).gain
    g2 = solve_lagrangian(p, lam, MdpConfig(truncation=1000)).gain
    assert abs(g1 - g2) < 1e-8


@pytest.mark.parametrize("p", GRID)
def test_threshold_matches_closed_form_argmin(p):
    lams = [lambda_intersection(p, n) for n in (1, 3, 6)]
    # Points strictly between consecutive indifference multipliers.
    for lam in [0.5 * lams[0], 0.5 * (lams[0] + lams[1]), 0.5 * (lams[1] + lams[2]), 1.5 * lams[2]]:
        sol = solve_lagrangian(p, lam)
        n = extract_threshold(sol)
        costs = [_lagrangian_gain(p, k, lam) for k in range(0, 400)]
        best = int(np.argmin(costs))
        assert n == best or (best == 0 and n == 1)
        assert sol.gain == pytest.approx(costs[best], rel=1e-8)


def test_indifference_point_gains():
    p = SystemParams(8, 0.8, 0.8)
    lam = lambda_intersection(p, 7)
    assert abs(_lagrangian_gain(p, 7, lam) - _lagrangian_gain(p, 8, lam)) < 1e-8
    sol = solve_lagrangian(p, lam)
    assert sol.gain == pytest.approx(_lagrangian_gain(p, 7, lam), abs=1e-8)
    assert extract_threshold(sol) in (7, 8)


def test_zero_price_threshold():
    assert extract_threshold(solve_lagrangian(SystemParams(8, 0.8, 0.8), 0.0)) in (0, 1)


def test_huge_price_saturates():
    sol = solve_lagrangian(SystemParams(8, 0.8, 0.8), 1e6)
    assert sol.saturated
    assert extract_threshold(sol) is None


def _fake(policy):
    policy = np.asarray(policy, dtype=bool)
    z = np.zeros(len(policy))
    return MdpSolution(gain=0.0, value=z, policy=policy, action_gap=z, lam=0.0, iterations=1, span=0.0)


def test_extract_threshold_cases():
    assert extract_threshold(_fake([True] * 10)) == 0
    assert extract_threshold(_fake([False] * 10)) is None
    assert extract_threshold(_fake([False] * 7 + [True] * 5)) == 7
    with pytest.raises(StructureError):
        extract_threshold(_fake([False, True, False, True]))


def test_non_convergence_reported():
    with pytest.raises(ConvergenceError) as exc:
        solve_lagrangian(SystemParams(8, 0.8, 0.8), 1.0, MdpConfig(max_iters=3))
    assert exc.value.iterations == 3
    assert exc.value.span > 0


def test_bad_inputs():
    with pytest.raises(ValueError):
        MdpConfig(truncation=1)
    with pytest.raises(ValueError):
        MdpConfig(tol=0.0)
    with pytest.raises(ValueError):
        solve_lagrangian(SystemParams(8, 0.8, 0.8), -1.0)
