"""Cross-checks of the closed forms against kernel-built truncated chains.

The oracles here only see the one-step kernel, so a wrong kernel or a wrong
closed form shows up as a disagreement.  ``run_suite`` backs the ``validate``
command.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from aoii import analysis
from aoii.mdp import MdpConfig, extract_threshold, solve_lagrangian, solve_unconstrained
from aoii.model import SystemParams, TransitionDistribution, aoii_kernel
from aoii.optimizer import find_threshold, solve_constrained

Kernel = Callable[[SystemParams, int, bool], TransitionDistribution]

TABLE1 = {0.2: 15, 0.4: 12, 0.6: 10, 0.8: 7}


def truncation_level(params: SystemParams, n: int, tail: float = 1e-14) -> int:
    """State index beyond which a threshold-``n`` chain holds less than ``tail`` mass."""
    a, b = params.a, params.b
    # Mass above k is at most b^(min(k,n)-1) a^(k-n); solve for k.
    if n > 1 and b**n > tail:
        return n + int(math.ceil(math.log(tail) / math.log(max(a, 1e-300)))) + 2
    return max(n, int(math.ceil(math.log(tail) / math.log(max(b, 1e-300))))) + 2


def chain_stationary(
    params: SystemParams,
    transmit_prob: Callable[[int], float],
    size: int,
    kernel: Kernel = aoii_kernel,
) -> np.ndarray:
    """Stationary law of the AoII chain truncated to ``0..size-1`` (top state absorbs growth)."""
    rows, cols, vals = [], [], []
    for s in range(size):
        q = transmit_prob(s)
        idle, tx = kernel(params, s, False), kernel(params, s, True)
        reset = (1 - q) * idle.p_reset + q * tx.p_reset
        grow = (1 - q) * idle.p_grow + q * tx.p_grow
        rows += [s, s]
        cols += [0, min(s + 1, size - 1)]
        vals += [reset, grow]
    p = sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))
    # Solve pi (P - I) = 0 with the first balance equation replaced by normalisation.
    m = (p.T - sparse.identity(size)).tolil()
    m[0, :] = np.ones(size)
    rhs = np.zeros(size)
    rhs[0] = 1.0
    return spsolve(m.tocsc(), rhs)


def threshold_stationary(params: SystemParams, n: int, kernel: Kernel = aoii_kernel, size: Optional[int] = None) -> np.ndarray:
    size = size or truncation_level(params, n)
    return chain_stationary(params, lambda s: 1.0 if s >= n else 0.0, size, kernel)


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


def default_grid() -> list[SystemParams]:
    grid = []
    for n_states in (2, 3, 8):
        for p_remain in (0.3, 0.5, 0.8, 0.9):
            for p_success in (0.3, 0.8, 1.0):
                grid.append(SystemParams(n_states, p_remain, p_success))
    # Idle-optimal regime (p_t >= p_R).
    grid += [SystemParams(2, 0.4, 0.8), SystemParams(3, 0.2, 0.5), SystemParams(2, 0.5, 0.9)]
    return grid


def _check(name: str, fn: Callable[[], Optional[str]]) -> PropertyResult:
    try:
        detail = fn()
    except AssertionError as exc:
        return PropertyResult(name, False, str(exc))
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return PropertyResult(name, False, f"{type(exc).__name__}: {exc}")
    return PropertyResult(name, True, detail or "")


def run_suite(
    grid: Optional[Iterable[SystemParams]] = None,
    kernel: Kernel = aoii_kernel,
    thresholds: Iterable[int] = (1, 2, 3, 5, 8),
    mdp_cfg: MdpConfig = MdpConfig(truncation=300),
) -> list[PropertyResult]:
    grid = list(grid or default_grid())
    helpful = [p for p in grid if p.transmission_helps and p.p_success > 0]
    idle_optimal = [p for p in grid if not p.transmission_helps]
    thresholds = list(thresholds)

    def kernel_rows():
        for p in grid:
            for s in (0, 1, 7):
                for tx in (False, True):
                    d = kernel(p, s, tx)
                    assert abs(d.p_reset + d.p_grow - 1.0) <= 1e-12, f"{p} s={s} tx={tx}: {d}"
        return f"{len(grid)} parameter sets"

    def stationary_oracle():
        worst = 0.0
        for p in helpful:
            for n in thresholds:
                oracle = threshold_stationary(p, n, kernel)
                closed = analysis.stationary(p, n).pmf_array(len(oracle) - 1)
                worst = max(worst, float(np.max(np.abs(oracle - closed))))
        assert worst <= 1e-9, f"max |pi - oracle| = {worst:.3e}"
        return f"max abs err {worst:.2e}"

    def moments_oracle():
        worst = 0.0
        for p in helpful:
            for n in thresholds:
                pi = threshold_stationary(p, n, kernel)
                k = np.arange(len(pi))
                c_err = abs(pi @ k - analysis.avg_penalty(p, n)) / analysis.avg_penalty(p, n)
                a_err = abs(pi[n:].sum() - analysis.active_fraction(p, n)) / analysis.active_fraction(p, n)
                worst = max(worst, c_err, a_err)
        assert worst <= 1e-9, f"max relative error {worst:.3e}"
        return f"max rel err {worst:.2e}"

    def monotone_sequences():
        for p in helpful:
            ns = range(0, 40)
            a = [analysis.active_fraction(p, n) for n in ns]
            c = [analysis.avg_penalty(p, n) for n in ns]
            pi0 = [analysis.stationary(p, n).pi0 for n in range(1, 40)]
            lam = [analysis.lambda_intersection(p, n) for n in range(0, 30)]
            assert all(x > y for x, y in zip(a, a[1:])), f"A(n) not strictly decreasing for {p}"
            assert math.isclose(c[0], c[1], rel_tol=1e-12), f"C(0) != C(1) for {p}"
            assert all(y >= x * (1 - 1e-12) for x, y in zip(c[1:], c[2:])), f"C(n) decreasing for {p}"
            assert all(y <= x * (1 + 1e-12) for x, y in zip(pi0, pi0[1:])), f"pi0(n) increasing for {p}"
            assert lam[0] == 0.0 and all(y >= x - 1e-9 * max(1.0, x) for x, y in zip(lam, lam[1:])), f"lambda(n) decreasing for {p}"
        return f"{len(helpful)} parameter sets"

    def unconstrained_gain():
        for p in helpful + idle_optimal:
            sol = solve_unconstrained(p, mdp_cfg, kernel)
            expected = min(analysis.cost_always_update(p), analysis.cost_never_update(p))
            assert abs(sol.gain - expected) <= 1e-6, f"{p}: gain {sol.gain} vs {expected}"
            if not p.transmission_helps:
                assert analysis.cost_never_update(p) <= analysis.cost_always_update(p)
                assert extract_threshold(sol) is None, f"{p}: transmits although idling is optimal"
        return f"{len(helpful) + len(idle_optimal)} instances, {len(idle_optimal)} idle-optimal"

    def lagrangian_threshold():
        count = 0
        for p in helpful[::3]:
            lams = [analysis.lambda_intersection(p, n) for n in (1, 2, 3)]
            for lam in [0.5 * lams[0], 0.5 * (lams[0] + lams[1]), 0.5 * (lams[1] + lams[2])]:
                n = extract_threshold(solve_lagrangian(p, lam, mdp_cfg, kernel))
                best = min(range(60), key=lambda k: analysis.lagrange_cost(p, k, lam, 1.0))
                assert n == best, f"{p} lambda={lam:.4g}: mdp {n} vs closed form {best}"
                count += 1
        return f"{count} (params, lambda) pairs"

    def mixture_budget():
        for p in helpful:
            for alpha in (0.01, 0.05, 0.1, 0.3, 0.7, 1.0):
                sol = solve_constrained(p, alpha)
                lo, hi = analysis.active_fraction(p, sol.n0), analysis.active_fraction(p, sol.n0 + 1)
                got = sol.rho * lo + (1 - sol.rho) * hi
                assert abs(got - alpha) <= 1e-12, f"{p} alpha={alpha}: {got}"
                assert lo >= alpha > hi, f"{p} alpha={alpha}: bracketing fails"
        return f"{len(helpful)} x 6 budgets"

    def table1():
        got = {pr: find_threshold(SystemParams(8, pr, 0.8), 0.1) - 1 for pr in TABLE1}
        assert got == TABLE1, f"{got}"
        return "n0 = 15, 12, 10, 7"

    checks = [
        ("kernel rows sum to one", kernel_rows),
        ("stationary law matches truncated chain", stationary_oracle),
        ("average penalty and active fraction match series", moments_oracle),
        ("monotone A(n), C(n), pi0(n), lambda(n)", monotone_sequences),
        ("unconstrained MDP gain matches closed forms", unconstrained_gain),
        ("Lagrangian MDP threshold matches closed-form argmin", lagrangian_threshold),
        ("mixture meets budget exactly", mixture_budget),
        ("threshold table for N=8, p_s=0.8, alpha=0.1", table1),
    ]
    return [_check(name, fn) for name, fn in checks]


def faulty_kernel(params: SystemParams, s: int, transmit: bool) -> TransitionDistribution:
    """Kernel with the sign of the transmission gain flipped; for harness self-tests only."""
    if s > 0 and transmit:
        p_reset = params.p_transition - params.p_success * (params.p_remain - params.p_transition)
        p_reset = min(1.0, max(0.0, p_reset))
        return TransitionDistribution(p_reset=p_reset, p_grow=1.0 - p_reset)
    return aoii_kernel(params, s, transmit)
