"""Relative value iteration on the truncated AoII MDP.

Used as an independent oracle: it knows nothing about threshold structure or
the closed forms in :mod:`aoii.analysis`, only the one-step kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from aoii.model import SystemParams, aoii_kernel


class ConvergenceError(RuntimeError):
    def __init__(self, iterations: int, span: float):
        super().__init__(f"value iteration did not converge in {iterations} sweeps (last span {span:.3e})")
        self.iterations = iterations
        self.span = span


class StructureError(RuntimeError):
    """Solved policy is not of threshold form."""


@dataclass(frozen=True)
class MdpConfig:
    truncation: int = 500
    tol: float = 1e-10
    max_iters: int = 1_000_000

    def __post_init__(self) -> None:
        if self.truncation < 2:
            raise ValueError(f"truncation must be >= 2, got {self.truncation}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class MdpSolution:
    gain: float
    value: np.ndarray
    policy: np.ndarray  # True = transmit
    action_gap: np.ndarray  # Q(transmit) - Q(idle), per state
    lam: float
    iterations: int
    span: float

    @property
    def saturated(self) -> bool:
        """No state below the truncation level transmits; the true threshold may lie beyond it."""
        return not self.policy[:-1].any()


def _kernel_arrays(kernel, params: SystemParams, size: int, transmit: bool) -> tuple[np.ndarray, np.ndarray]:
    zero = kernel(params, 0, transmit)
    pos = kernel(params, 1, transmit)
    reset = np.full(size, pos.p_reset)
    grow = np.full(size, pos.p_grow)
    reset[0], grow[0] = zero.p_reset, zero.p_grow
    return reset, grow


def _solve(params: SystemParams, lam: float, cfg: MdpConfig, kernel=aoii_kernel) -> MdpSolution:
    size = cfg.truncation + 1
    states = np.arange(size, dtype=float)
    # Growth from the top state stays there (absorbing tail).
    nxt = np.minimum(np.arange(size) + 1, cfg.truncation)
    r0, g0 = _kernel_arrays(kernel, params, size, False)
    r1, g1 = _kernel_arrays(kernel, params, size, True)
    cost1 = states + lam

    value = np.zeros(size)  # V_0 = 0
    span = np.inf
    for it in range(1, cfg.max_iters + 1):
        v_next = value[nxt]
        q0 = states + r0 * value[0] + g0 * v_next
        q1 = cost1 + r1 * value[0] + g1 * v_next
        tv = np.minimum(q0, q1)
        diff = tv - value
        span = float(diff.max() - diff.min())
        value = tv - tv[0]
        # Values grow like S^2; below ~1e3 ulps of their magnitude the span is rounding noise.
        floor = 1e3 * np.finfo(float).eps * float(np.abs(tv).max())
        if span < max(cfg.tol, floor):
            gain = 0.5 * float(diff.max() + diff.min())
            v_next = value[nxt]
            q0 = states + r0 * value[0] + g0 * v_next
            q1 = cost1 + r1 * value[0] + g1 * v_next
            return MdpSolution(
                gain=gain,
                value=value,
                policy=q1 < q0,  # ties go to idle
                action_gap=q1 - q0,
                lam=float(lam),
                iterations=it,
                span=span,
            )
    raise ConvergenceError(cfg.max_iters, span)


def solve_unconstrained(params: SystemParams, cfg: MdpConfig = MdpConfig(), kernel=aoii_kernel) -> MdpSolution:
    """Average-AoII-optimal policy with no power budget."""
    return _solve(params, 0.0, cfg, kernel)


def solve_lagrangian(
    params: SystemParams, lam: float, cfg: MdpConfig = MdpConfig(), kernel=aoii_kernel
) -> MdpSolution:
    """Optimal policy when each transmission is charged ``lam``."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return _solve(params, lam, cfg, kernel)


def extract_threshold(sol: MdpSolution) -> Optional[int]:
    """Smallest transmitting state, or ``None`` if the policy never transmits."""
    policy = np.asarray(sol.policy, dtype=bool)
    on = np.flatnonzero(policy)
    if on.size == 0:
        return None
    n = int(on[0])
    if not policy[n:].all():
        off = n + int(np.flatnonzero(~policy[n:])[0])
        raise StructureError(f"policy transmits at S={n} but idles at S={off}")
    if n == len(policy) - 1:
        return None
    return n
