"""System parameters and one-step dynamics of the AoII, AoI and error processes.

The source is a symmetric N-state Markov chain: it keeps its value with
probability ``p_remain`` and jumps to each of the other ``N - 1`` values with
probability ``p_transition``.  Updates travel over an i.i.d. erasure channel
that delivers with probability ``p_success``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class SystemParams:
    """Source and channel parameters.

    ``p_transition`` is derived from ``num_states`` and ``p_remain`` so the
    row of the source transition matrix always sums to one.
    """

    num_states: int
    p_remain: float
    p_success: float

    def __post_init__(self) -> None:
        if isinstance(self.num_states, bool) or int(self.num_states) != self.num_states:
            raise ValueError(f"num_states must be an integer, got {self.num_states!r}")
        object.__setattr__(self, "num_states", int(self.num_states))
        object.__setattr__(self, "p_remain", float(self.p_remain))
        object.__setattr__(self, "p_success", float(self.p_success))
        if self.num_states < 2:
            raise ValueError(f"num_states must be >= 2, got {self.num_states}")
        if not 0.0 < self.p_remain < 1.0:
            raise ValueError(f"p_remain must lie in (0, 1), got {self.p_remain}")
        if not 0.0 <= self.p_success <= 1.0:
            raise ValueError(f"p_success must lie in [0, 1], got {self.p_success}")

    @property
    def p_transition(self) -> float:
        return (1.0 - self.p_remain) / (self.num_states - 1)

    @property
    def p_fail(self) -> float:
        return 1.0 - self.p_success

    @property
    def p_leave(self) -> float:
        """Probability that the source leaves its current value, ``(N-1) p_t``."""
        return (self.num_states - 1) * self.p_transition

    @property
    def a(self) -> float:
        """Growth probability of a nonzero penalty under transmission."""
        pt = self.p_transition
        return self.p_remain * self.p_fail + (self.num_states - 2) * pt + self.p_success * pt

    @property
    def b(self) -> float:
        """Growth probability of a nonzero penalty when idle."""
        return self.p_remain + (self.num_states - 2) * self.p_transition

    @property
    def transmission_helps(self) -> bool:
        """True when sending an update raises the reset probability (``p_t < p_R``)."""
        return self.p_transition < self.p_remain

    def describe(self) -> dict:
        return {
            "N": self.num_states,
            "p_remain": self.p_remain,
            "p_transition": self.p_transition,
            "p_success": self.p_success,
            "a": self.a,
            "b": self.b,
        }


@dataclass(frozen=True)
class PenaltyState:
    """AoII and AoI at one slot.

    AoII may exceed AoI: a delivery resets the age to 1, but if the source
    moves in that slot the monitor is wrong again and AoII keeps growing.
    """

    aoii: int = 0
    aoi: int = 0

    def __post_init__(self) -> None:
        if self.aoii < 0 or self.aoi < 0:
            raise ValueError("penalties are nonnegative")

    @property
    def in_error(self) -> bool:
        return self.aoii > 0


@dataclass(frozen=True)
class TransitionDistribution:
    """Law of the next penalty: reset to 0 or grow by one step."""

    p_reset: float
    p_grow: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_reset <= 1.0 and 0.0 <= self.p_grow <= 1.0):
            raise ValueError(f"probabilities out of range: {self}")
        if not math.isclose(self.p_reset + self.p_grow, 1.0, rel_tol=0.0, abs_tol=1e-12):
            raise ValueError(f"p_reset + p_grow = {self.p_reset + self.p_grow} != 1")


def aoii_kernel(params: SystemParams, s: int, transmit: bool) -> TransitionDistribution:
    if s < 0:
        raise ValueError(f"penalty must be nonnegative, got {s}")
    if s == 0:
        # Monitor already correct: an update carries nothing new.
        return TransitionDistribution(p_reset=params.p_remain, p_grow=params.p_leave)
    if not transmit:
        return TransitionDistribution(p_reset=params.p_transition, p_grow=params.b)
    p_reset = params.p_remain * params.p_success + params.p_fail * params.p_transition
    return TransitionDistribution(p_reset=p_reset, p_grow=params.a)


def step_aoii(params: SystemParams, s: int, transmit: bool, u: float) -> int:
    """Sample the next AoII from a uniform draw ``u`` in [0, 1)."""
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    if u < aoii_kernel(params, s, transmit).p_reset:
        return 0
    return s + 1


def step_aoi(params: SystemParams, delta: int, transmit: bool, channel_success: bool) -> int:
    # A delivered sample was taken at the start of the slot, so it is one slot old on arrival.
    if transmit and channel_success:
        return 1
    return delta + 1
