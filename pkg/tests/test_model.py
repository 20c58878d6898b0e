import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aoii.model import PenaltyState, SystemParams, TransitionDistribution, aoii_kernel, step_aoi, step_aoii

valid_params = st.builds(
    SystemParams,
    st.integers(2, 20),
    st.floats(0.01, 0.99),
    st.floats(0.0, 1.0),
)


def test_derived_rates():
    p = SystemParams(8, 0.8, 0.8)
    assert p.p_transition == pytest.approx(0.2 / 7)
    assert p.p_fail == pytest.approx(0.2)
    assert p.a == pytest.approx(0.8 * 0.2 + 6 * 0.2 / 7 + 0.8 * 0.2 / 7)
    assert p.b == pytest.approx(0.8 + 6 * 0.2 / 7)
    assert p.transmission_helps


@pytest.mark.parametrize(
    "args",
    [(1, 0.5, 0.5), (2, 0.0, 0.5), (2, 1.0, 0.5), (2, 0.5, -0.1), (2, 0.5, 1.1), (2, math.nan, 0.5)],
)
def test_params_rejected(args):
    with pytest.raises(ValueError):
        SystemParams(*args)


def test_kernel_examples():
    p = SystemParams(2, 0.8, 1.0)
    d = aoii_kernel(p, 3, True)
    assert d.p_reset == pytest.approx(0.8)
    assert d.p_grow == pytest.approx(0.2)
    d = aoii_kernel(p, 3, False)
    assert d.p_reset == pytest.approx(0.2)
    d = aoii_kernel(p, 0, True)
    assert d.p_reset == pytest.approx(0.8)


def test_transition_distribution_validates():
    with pytest.raises(ValueError):
        TransitionDistribution(0.5, 0.6)
    with pytest.raises(ValueError):
        TransitionDistribution(-0.1, 1.1)


@given(valid_params, st.integers(0, 1000), st.booleans())
def test_kernel_rows_sum_to_one(p, s, transmit):
    d = aoii_kernel(p, s, transmit)
    assert 0.0 <= d.p_reset <= 1.0
    assert d.p_reset + d.p_grow == pytest.approx(1.0, abs=1e-12)


@given(valid_params, st.integers(1, 1000))
def test_transmit_helps_iff_pt_below_pr(p, s):
    gain = aoii_kernel(p, s, True).p_reset - aoii_kernel(p, s, False).p_reset
    # Sending raises the reset chance by p_s (p_R - p_t).
    assert gain == pytest.approx(p.p_success * (p.p_remain - p.p_transition), abs=1e-12)
    if p.p_success * abs(p.p_remain - p.p_transition) > 1e-9:
        assert (gain > 0) == p.transmission_helps


def test_step_aoii_matches_kernel_frequencies():
    p = SystemParams(4, 0.6, 0.7)
    rng = np.random.default_rng(7)
    draws = rng.random(1_000_000)
    for transmit in (False, True):
        expect = aoii_kernel(p, 5, transmit).p_reset
        resets = sum(step_aoii(p, 5, transmit, u) == 0 for u in draws)
        freq = resets / draws.size
        se = math.sqrt(expect * (1 - expect) / draws.size)
        assert abs(freq - expect) <= 4 * se


def test_step_aoii_bounds():
    p = SystemParams(2, 0.5, 0.5)
    assert step_aoii(p, 0, False, 0.0) == 0
    assert step_aoii(p, 0, False, 0.999) == 1
    with pytest.raises(ValueError):
        step_aoii(p, 0, False, 1.0)


def test_step_aoi():
    p = SystemParams(2, 0.5, 0.5)
    assert step_aoi(p, 4, True, True) == 1
    assert step_aoi(p, 4, True, False) == 5
    assert step_aoi(p, 4, False, True) == 5


def test_penalty_state_invariant():
    assert PenaltyState(2, 3).in_error
    assert not PenaltyState(0, 3).in_error
    assert PenaltyState(6, 1).in_error  # delivery followed by a source move
    with pytest.raises(ValueError):
        PenaltyState(-1, 0)
