"""AoI-threshold comparison policies under the same power budget.

An AoI threshold ``m`` transmits whenever the age is at least ``m``.  After a
delivery the age restarts at 1, so each renewal cycle is ``m - 1`` idle slots
followed by a geometric number of attempts; both the active fraction and the
average age follow from renewal-reward.
"""

from __future__ import annotations

from dataclasses import dataclass

from aoii.model import SystemParams
from aoii.optimizer import _check_alpha, first_below, mixing_weight
from aoii.sim import PolicySpec


def _check(params: SystemParams, m: int) -> None:
    if params.p_success <= 0.0:
        raise ValueError("AoI thresholds need p_success > 0")
    if int(m) != m or m < 1:
        raise ValueError(f"AoI threshold must be an integer >= 1, got {m!r}")


def aoi_active_fraction(params: SystemParams, m: int) -> float:
    _check(params, m)
    attempts = 1.0 / params.p_success
    return attempts / ((m - 1) + attempts)


def aoi_average_age(params: SystemParams, m: int) -> float:
    """Long-run average age under AoI threshold ``m``."""
    _check(params, m)
    ps = params.p_success
    mean = (m - 1) + 1.0 / ps
    second = (1.0 - ps) / ps**2 + mean**2
    # Ages over a cycle of length L are 1..L.
    return (second + mean) / (2.0 * mean)


def aoi_boundary_coin(params: SystemParams, m0: int, alpha: float) -> float:
    """Transmit probability at age ``m0`` giving active fraction exactly ``alpha``.

    A failed coin adds one idle slot to the cycle, so the mean cycle is
    ``m0 - q + 1/p_s`` and the budget equation is linear in ``q``.
    """
    _check(params, m0)
    attempts = 1.0 / params.p_success
    q = m0 + attempts - attempts / alpha
    return min(1.0, max(0.0, q))


def aoi_randomized_age(params: SystemParams, m0: int, q: float) -> float:
    """Average age when transmitting with probability ``q`` at age ``m0`` and always above."""
    _check(params, m0)
    ps = params.p_success
    mean = m0 - q + 1.0 / ps
    second = q * (1.0 - q) + (1.0 - ps) / ps**2 + mean**2
    return (second + mean) / (2.0 * mean)


@dataclass(frozen=True)
class AoiPolicyFamily:
    params: SystemParams
    alpha: float
    m0: int
    rho: float
    expected_power: float
    expected_aoi: float
    coin: float

    def policy(self, mixing: str = "state") -> PolicySpec:
        weight = self.coin if mixing == "state" else self.rho
        return PolicySpec.aoi_mixture(self.m0, weight, mixing)


def solve_aoi_constrained(params: SystemParams, alpha: float) -> AoiPolicyFamily:
    """Lowest-age mixture of adjacent AoI thresholds that spends exactly ``alpha``."""
    alpha = _check_alpha(alpha)
    if params.p_success <= 0.0:
        raise ValueError("AoI baseline needs p_success > 0")
    m0 = first_below(lambda m: aoi_active_fraction(params, m), alpha) - 1
    a_lo, a_hi = aoi_active_fraction(params, m0), aoi_active_fraction(params, m0 + 1)
    rho = mixing_weight(a_lo, a_hi, alpha)
    return AoiPolicyFamily(
        params=params,
        alpha=alpha,
        m0=m0,
        rho=rho,
        expected_power=rho * a_lo + (1.0 - rho) * a_hi,
        expected_aoi=rho * aoi_average_age(params, m0) + (1.0 - rho) * aoi_average_age(params, m0 + 1),
        coin=aoi_boundary_coin(params, m0, alpha),
    )
