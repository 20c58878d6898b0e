"""Power-constrained AoII minimisation via the Lagrangian threshold structure."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from aoii.analysis import (
    active_fraction,
    boundary_coin,
    avg_penalty,
    cost_never_update,
    lagrange_cost,
    lambda_intersection,
)
from aoii.model import SystemParams
from aoii.sim import PolicySpec


class InfeasibleRegimeError(ValueError):
    """The constrained problem has no meaningful Lagrangian solution (e.g. ``p_success = 0``)."""


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha


def first_below(seq: Callable[[int], float], alpha: float, *, max_bound: int = 2**62) -> int:
    """Smallest ``n >= 1`` with ``seq(n) < alpha`` for a nonincreasing ``seq``.

    Doubles an upper bound until it brackets the answer, then bisects.  Makes
    ``2 * ceil(log2(n))`` evaluations of ``seq`` at most, plus one.
    """
    lo = hi = 1
    while seq(hi) - alpha >= 0:
        lo, hi = hi, 2 * hi
        if hi > max_bound:
            raise RuntimeError(f"no n <= {max_bound} with value below {alpha}")
    mid = -(-(lo + hi) // 2)
    while mid < hi:
        if seq(mid) - alpha >= 0:
            lo = mid
        else:
            hi = mid
        mid = -(-(lo + hi) // 2)
    return mid


def _check_regime(params: SystemParams) -> None:
    if params.p_success == 0.0:
        raise InfeasibleRegimeError("p_success = 0: transmissions never reach the monitor")
    if not params.transmission_helps:
        raise InfeasibleRegimeError(
            f"p_transition = {params.p_transition} >= p_remain = {params.p_remain}: never transmitting is optimal"
        )


def find_threshold(
    params: SystemParams,
    alpha: float,
    active: Optional[Callable[[SystemParams, int], float]] = None,
) -> int:
    """Return ``n' = inf{n >= 1 : A(n) < alpha}``; the lower mixing threshold is ``n' - 1``.

    ``active`` replaces :func:`aoii.analysis.active_fraction`, e.g. to count calls.
    """
    alpha = _check_alpha(alpha)
    _check_regime(params)
    active = active or active_fraction
    return first_below(lambda n: active(params, n), alpha)


@dataclass(frozen=True)
class ConstrainedSolution:
    """Optimal randomised policy: threshold ``n0`` with probability ``rho``, else ``n0 + 1``.

    ``coin`` is the transmit probability at penalty ``n0`` that realises the
    same mixture as a single stationary policy.  ``n0 is None`` encodes the
    never-transmit policy, optimal for any budget when ``p_transition >= p_remain``.
    """

    params: SystemParams
    alpha: float
    n0: Optional[int]
    rho: float
    lambda_star: float
    expected_cost: float
    expected_power: float
    coin: float = 1.0

    @property
    def never_transmit(self) -> bool:
        return self.n0 is None

    def policy(self, mixing: str = "state") -> PolicySpec:
        if self.never_transmit:
            return PolicySpec.never()
        weight = self.coin if mixing == "state" else self.rho
        return PolicySpec.mixture(self.n0, weight, mixing)

    def as_dict(self) -> dict:
        return {
            "N": self.params.num_states,
            "p_remain": self.params.p_remain,
            "p_success": self.params.p_success,
            "alpha": self.alpha,
            "n0": self.n0,
            "rho": self.rho,
            "lambda_star": self.lambda_star,
            "expected_cost": self.expected_cost,
            "expected_power": self.expected_power,
            "coin": self.coin,
        }


def mixing_weight(a_lo: float, a_hi: float, alpha: float) -> float:
    """Weight on the lower threshold so the mixed active fraction equals ``alpha``."""
    if a_lo == alpha:
        return 1.0
    return (alpha - a_hi) / (a_lo - a_hi)


def solve_constrained(params: SystemParams, alpha: float) -> ConstrainedSolution:
    alpha = _check_alpha(alpha)
    if not params.transmission_helps:
        return ConstrainedSolution(
            params=params,
            alpha=alpha,
            n0=None,
            rho=1.0,
            lambda_star=0.0,
            expected_cost=cost_never_update(params),
            expected_power=0.0,
        )
    n0 = find_threshold(params, alpha) - 1
    a_lo, a_hi = active_fraction(params, n0), active_fraction(params, n0 + 1)
    rho = mixing_weight(a_lo, a_hi, alpha)
    return ConstrainedSolution(
        params=params,
        alpha=alpha,
        n0=n0,
        rho=rho,
        lambda_star=lambda_intersection(params, n0),
        expected_cost=rho * avg_penalty(params, n0) + (1.0 - rho) * avg_penalty(params, n0 + 1),
        expected_power=rho * a_lo + (1.0 - rho) * a_hi,
        coin=boundary_coin(params, n0, alpha),
    )


@dataclass
class Certificate:
    checks: dict[str, bool] = field(default_factory=dict)
    details: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    @property
    def failures(self) -> list[str]:
        return [name for name, passed in self.checks.items() if not passed]

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks[name] = bool(passed)
        self.details[name] = detail


def verify_optimality(
    params: SystemParams,
    sol: ConstrainedSolution,
    window: Optional[int] = None,
    tol: float = 1e-9,
) -> Certificate:
    """Check the indifference, minimality and bracketing conditions of ``sol``."""
    cert = Certificate()
    if sol.never_transmit:
        cert.add("never_transmit_regime", not params.transmission_helps, f"p_t={params.p_transition}, p_R={params.p_remain}")
        return cert
    n0, lam, alpha = sol.n0, sol.lambda_star, sol.alpha
    c0 = lagrange_cost(params, n0, lam, alpha)
    c1 = lagrange_cost(params, n0 + 1, lam, alpha)
    scale = max(1.0, abs(c0))
    cert.add("indifference", abs(c0 - c1) <= tol * scale, f"C(n0,l*)={c0!r}, C(n0+1,l*)={c1!r}")

    w = 10 * (n0 + 1) if window is None else window
    costs = np.array([lagrange_cost(params, n, lam, alpha) for n in range(n0 + w + 1)])
    worst = int(np.argmin(costs))
    cert.add(
        "minimality",
        bool(np.all(costs >= c0 - tol * scale)),
        f"min over [0, {n0 + w}] at n={worst}: {costs[worst]!r} vs C(n0,l*)={c0!r}",
    )
    a_lo, a_hi = active_fraction(params, n0), active_fraction(params, n0 + 1)
    cert.add("bracketing", a_lo >= alpha > a_hi, f"A(n0)={a_lo!r}, alpha={alpha!r}, A(n0+1)={a_hi!r}")
    return cert


def dual_value(params: SystemParams, lam: float, alpha: float, n_max: int) -> float:
    """Lagrange dual function, minimising over thresholds ``0..n_max``."""
    return min(lagrange_cost(params, n, lam, alpha) for n in range(n_max + 1))
