"""Closed forms for threshold policies on the AoII chain.

A threshold policy ``n`` transmits iff the penalty is at least ``n``.  Under it
the penalty is a skip-free-upward chain with resets to zero, whose stationary
law is geometric in two pieces (ratio ``b`` below the threshold, ``a`` above).
Everything here evaluates the geometric tails exactly; no series truncation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from aoii.model import SystemParams


class DegenerateParamsError(ValueError):
    """Raised when a closed form is undefined for the given parameters."""


def _rates(params: SystemParams) -> tuple[float, float, float, float, float]:
    """Return ``(a, b, c, 1 - a, 1 - b)`` with the complements formed without cancellation.

    ``1 - b`` is the idle reset probability ``p_t`` and ``1 - a`` the transmit
    reset probability; subtracting ``b`` or ``a`` from one loses most digits
    when ``p_remain`` is close to one.
    """
    ra = params.p_remain * params.p_success + params.p_fail * params.p_transition
    rb = params.p_transition
    if not ra > 0.0:
        raise DegenerateParamsError(f"1 - a = {ra} must be > 0")
    if not rb > 0.0:
        raise DegenerateParamsError(f"1 - b = {rb} must be > 0")
    return params.a, params.b, params.p_leave, ra, rb


# Up to this many terms the geometric sums are added up directly.
_DIRECT_SUM_LIMIT = 4096


def _geometric_sums(b: float, rb: float, n: int) -> tuple[float, float]:
    """``(sum_{k<n} b^k, sum_{k=1..n} k b^(k-1))`` where ``rb = 1 - b``."""
    if n <= _DIRECT_SUM_LIMIT:
        powers = b ** np.arange(n, dtype=float)
        return float(powers.sum()), float(np.arange(1, n + 1) @ powers)
    # Here n * rb is large enough that the closed forms do not cancel.
    bn = b**n
    s0 = (1.0 - bn) / rb
    return s0, (s0 - n * bn) / rb


def _check_threshold(n: int, minimum: int) -> int:
    if int(n) != n or n < minimum:
        raise ValueError(f"threshold must be an integer >= {minimum}, got {n!r}")
    return int(n)


def cost_always_update(params: SystemParams) -> float:
    _, _, c, ra, _ = _rates(params)
    return c / (ra * (ra + c))


def cost_never_update(params: SystemParams) -> float:
    _, _, c, _, rb = _rates(params)
    return c / (rb * (rb + c))


def _pi0_denominator(params: SystemParams, n: int) -> float:
    a, b, c, ra, rb = _rates(params)
    # b ** (n - 1) underflows to 0.0 for very large n, which is exactly the idle-policy limit.
    s0, _ = _geometric_sums(b, rb, n)
    return 1.0 + c * s0 + c * a * b ** (n - 1) / ra


@dataclass(frozen=True)
class StationaryDistribution:
    params: SystemParams
    threshold: int
    pi0: float

    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        if k == 0:
            return self.pi0
        p = self.params
        c, a, b, n = p.p_leave, p.a, p.b, self.threshold
        if k <= n:
            return c * b ** (k - 1) * self.pi0
        return c * b ** (n - 1) * a ** (k - n) * self.pi0

    def pmf_array(self, kmax: int) -> np.ndarray:
        """Probabilities of states ``0..kmax``."""
        return np.array([self.pmf(k) for k in range(kmax + 1)])

    def below_threshold_mass(self) -> float:
        """Mass on the idle states ``1..n``."""
        _, b, c, _, rb = _rates(self.params)
        return c * _geometric_sums(b, rb, self.threshold)[0] * self.pi0

    def tail_mass(self) -> float:
        """Mass on states ``k > n`` (closed-form geometric tail)."""
        a, b, c, ra, _ = _rates(self.params)
        return c * b ** (self.threshold - 1) * a / ra * self.pi0

    def total_mass(self) -> float:
        return self.pi0 + self.below_threshold_mass() + self.tail_mass()


def stationary(params: SystemParams, n: int) -> StationaryDistribution:
    n = _check_threshold(n, 1)
    return StationaryDistribution(params=params, threshold=n, pi0=1.0 / _pi0_denominator(params, n))


def avg_penalty(params: SystemParams, n: int) -> float:
    """Long-run average AoII of threshold ``n`` (``n = 0`` is always-update)."""
    n = _check_threshold(n, 0)
    if n == 0:
        return cost_always_update(params)
    a, b, c, ra, rb = _rates(params)
    _, head = _geometric_sums(b, rb, n)
    tail = b ** (n - 1) * a * (n + 1.0 / ra) / ra
    return c * (head + tail) / _pi0_denominator(params, n)


def active_fraction(params: SystemParams, n: int) -> float:
    """Long-run fraction of slots spent transmitting under threshold ``n``."""
    n = _check_threshold(n, 0)
    if n == 0:
        return 1.0
    _, b, c, ra, _ = _rates(params)
    return c * b ** (n - 1) / (ra * _pi0_denominator(params, n))


@dataclass(frozen=True)
class PolicyCost:
    penalty_part: float
    lagrange_part: float

    @property
    def total(self) -> float:
        return self.penalty_part + self.lagrange_part


def policy_cost(params: SystemParams, n: int, lam: float, alpha: float) -> PolicyCost:
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return PolicyCost(
        penalty_part=avg_penalty(params, n),
        lagrange_part=lam * (active_fraction(params, n) - alpha),
    )


def lagrange_cost(params: SystemParams, n: int, lam: float, alpha: float) -> float:
    return policy_cost(params, n, lam, alpha).total


def lambda_intersection(params: SystemParams, n: int) -> float:
    """Multiplier at which thresholds ``n`` and ``n + 1`` have equal Lagrangian cost."""
    n = _check_threshold(n, 0)
    if n == 0:
        # Always-update and transmit-on-error share the same penalty.
        return 0.0
    gap = active_fraction(params, n) - active_fraction(params, n + 1)
    if not gap > 0.0:
        raise DegenerateParamsError(
            f"A({n}) - A({n + 1}) = {gap}: thresholds are indistinguishable "
            "(p_success = 0, p_transition >= p_remain, or n beyond float resolution)"
        )
    return (avg_penalty(params, n + 1) - avg_penalty(params, n)) / gap


@dataclass(frozen=True)
class RandomizedThresholdMetrics:
    avg_penalty: float
    active_fraction: float
    pi0: float


def randomized_threshold(params: SystemParams, n0: int, coins: Sequence[float]) -> RandomizedThresholdMetrics:
    """Exact metrics of a threshold policy randomised on a few boundary states.

    The policy idles below ``n0``, transmits with probability ``coins[i]`` at
    penalty ``n0 + i`` and always transmits from ``n0 + len(coins)`` upward.
    ``coins=[]`` reproduces the pure threshold ``n0``.
    """
    n0 = _check_threshold(n0, 0)
    a, b, c, ra, rb = _rates(params)
    coins = [float(q) for q in coins]
    if any(not 0.0 <= q <= 1.0 for q in coins):
        raise ValueError(f"coin probabilities must lie in [0, 1], got {coins}")
    coin0 = None
    if n0 == 0:
        # Transmitting at zero changes nothing but the power spent.
        coin0 = coins[0] if coins else 1.0
        coins, n0 = coins[1:], 1

    # Unnormalised masses relative to pi_0 = 1.
    s0, s1 = _geometric_sums(b, rb, n0 - 1)
    mass = c * s0  # states 1..n0-1
    cost = c * s1
    power = 0.0
    pk = c * b ** (n0 - 1)  # mass at state n0
    k = n0
    for q in coins:
        mass += pk
        cost += k * pk
        power += q * pk
        pk *= q * a + (1.0 - q) * b
        k += 1
    # Geometric tail from state k with ratio a, transmitting everywhere.
    mass += pk / ra
    cost += pk * (k / ra + a / ra**2)
    power += pk / ra
    pi0 = 1.0 / (1.0 + mass)
    if coin0 is not None:
        power += coin0
    return RandomizedThresholdMetrics(avg_penalty=cost * pi0, active_fraction=power * pi0, pi0=pi0)


def boundary_coin(params: SystemParams, n0: int, alpha: float) -> float:
    """Transmit probability at penalty ``n0`` that makes the active fraction exactly ``alpha``.

    The policy idles below ``n0`` and always transmits above it.  Both the
    transmitting mass and the normalisation are affine in the coin, so the
    budget equation solves in closed form.  The result realises the
    ``n0``/``n0 + 1`` mixture with the same average penalty.
    """
    n0 = _check_threshold(n0, 0)
    a, b, c, ra, rb = _rates(params)
    if n0 == 0:
        pi0 = stationary(params, 1).pi0
        q = (alpha - (1.0 - pi0)) / pi0
    else:
        at_n0 = c * b ** (n0 - 1)
        idle_norm = 1.0 + c * _geometric_sums(b, rb, n0)[0] + at_n0 * b / ra
        # b - a = (1 - a) - (1 - b)
        q = (alpha * idle_norm - at_n0 * b / ra) / (at_n0 * (1.0 - (1.0 - alpha) * (ra - rb) / ra))
    return min(1.0, max(0.0, q))
