"""Monte Carlo simulation of the source / channel / monitor loop.

The source symbol and the monitor's estimate are simulated explicitly, so the
AoII transition law is checked end to end rather than assumed.  Long-run
averages come with batch-means standard errors.
"""

from __future__ import annotations

import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from aoii.analysis import randomized_threshold
from aoii.model import SystemParams

N_BATCHES = 30
DEFAULT_BURN_IN = 10_000
_CHUNK = 1 << 18
_NEVER = np.iinfo(np.int64).max // 4

# metric rows in the batch accumulator
_AOII, _AOI, _ERR, _TX, _ZERO = range(5)


class Kind(str, enum.Enum):
    ALWAYS = "always"
    NEVER = "never"
    THRESHOLD = "threshold"
    MIXTURE = "mixture"
    AOI_THRESHOLD = "aoi-threshold"
    AOI_MIXTURE = "aoi-mixture"


MIXING_MODES = ("state", "literal", "cycle")


@dataclass(frozen=True)
class PolicySpec:
    """Transmission rule.

    Mixtures randomise between thresholds ``threshold`` and ``threshold + 1``.
    ``mixing`` picks how:

    * ``"state"``: at penalty ``threshold`` transmit with probability ``rho``,
      always transmit above it.  To meet a budget exactly pass the calibrated
      coin (``ConstrainedSolution.coin``), not the mixing weight.
    * ``"literal"``: transmit with probability ``rho`` at ``threshold`` and
      ``1 - rho`` at ``threshold + 1``, always above.
    * ``"cycle"``: at every renewal (AoII back to zero, or a delivery for the
      AoI variants) draw which threshold to run until the next renewal, with
      odds set so a fraction ``rho`` of time runs the lower threshold.
    """

    kind: Kind
    threshold: int = 0
    rho: float = 1.0
    mixing: str = "state"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.threshold < 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")
        if self.kind in (Kind.AOI_THRESHOLD, Kind.AOI_MIXTURE) and self.threshold < 1:
            raise ValueError("AoI thresholds start at 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.mixing not in MIXING_MODES:
            raise ValueError(f"mixing must be one of {MIXING_MODES}, got {self.mixing!r}")

    @classmethod
    def always(cls) -> "PolicySpec":
        return cls(Kind.ALWAYS)

    @classmethod
    def never(cls) -> "PolicySpec":
        return cls(Kind.NEVER)

    @classmethod
    def aoii_threshold(cls, n: int) -> "PolicySpec":
        return cls(Kind.THRESHOLD, threshold=n)

    @classmethod
    def mixture(cls, n0: int, rho: float, mixing: str = "state") -> "PolicySpec":
        return cls(Kind.MIXTURE, threshold=n0, rho=rho, mixing=mixing)

    @classmethod
    def aoi_threshold(cls, m: int) -> "PolicySpec":
        return cls(Kind.AOI_THRESHOLD, threshold=m)

    @classmethod
    def aoi_mixture(cls, m0: int, rho: float, mixing: str = "state") -> "PolicySpec":
        return cls(Kind.AOI_MIXTURE, threshold=m0, rho=rho, mixing=mixing)

    @property
    def tag(self) -> str:
        if self.kind in (Kind.ALWAYS, Kind.NEVER):
            return self.kind.value
        if self.kind in (Kind.THRESHOLD, Kind.AOI_THRESHOLD):
            return f"{self.kind.value}({self.threshold})"
        return f"{self.kind.value}({self.threshold},{self.rho:.6g},{self.mixing})"


@dataclass(frozen=True)
class SimMetrics:
    avg_aoii: float
    avg_aoi: float
    error_rate: float
    tx_fraction: float
    zero_fraction: float
    se_aoii: float
    se_aoi: float
    se_error: float
    se_tx: float
    se_zero: float
    horizon: int
    burn_in: int
    seed: int
    policy: str

    def as_dict(self) -> dict:
        return asdict(self)


@numba.njit(cache=True)
def _simulate_chunk(
    u, state, acc, trace, record,
    n_states, p_remain, p_trans, p_success,
    watch_aoi, lo, coin_lo, coin_hi, cycle, w_lo,
    t0, burn_in, batch_len,
):
    x, xhat, s, age, thr = state[0], state[1], state[2], state[3], state[4]
    for i in range(u.shape[0]):
        t = t0 + i
        if cycle:
            renewal = (s == 0) if watch_aoi == 0 else (age <= 1)
            if renewal:
                thr = lo if u[i, 3] < w_lo else lo + 1
        else:
            thr = lo
        v = age if watch_aoi else s
        if v < thr:
            psi = 0
        elif v == thr:
            psi = 1 if u[i, 2] < coin_lo else 0
        elif v == thr + 1:
            psi = 1 if u[i, 2] < coin_hi else 0
        else:
            psi = 1

        if record:
            trace[0, i] = s
            trace[1, i] = age
            trace[2, i] = psi
        if t >= burn_in:
            b = (t - burn_in) // batch_len
            if b < acc.shape[1]:
                acc[0, b] += s
                acc[1, b] += age
                acc[2, b] += 1 if s > 0 else 0
                acc[3, b] += psi
                acc[4, b] += 1 if s == 0 else 0

        # Delivery carries the symbol sampled in this slot.
        delivered = psi == 1 and u[i, 1] < p_success
        if delivered:
            xhat = x
        us = u[i, 0]
        if us >= p_remain:
            j = int((us - p_remain) / p_trans)
            if j > n_states - 2:
                j = n_states - 2
            x = j if j < x else j + 1
        s = 0 if xhat == x else s + 1
        age = 1 if delivered else age + 1
    state[0], state[1], state[2], state[3], state[4] = x, xhat, s, age, thr


def _mean_cycle_length(params: SystemParams, policy: PolicySpec, threshold: int) -> float:
    if policy.kind is Kind.AOI_MIXTURE:
        return threshold - 1 + 1.0 / params.p_success
    return 1.0 / randomized_threshold(params, threshold, []).pi0


def _kernel_args(params: SystemParams, policy: PolicySpec) -> tuple:
    """(watch_aoi, lo, coin_lo, coin_hi, cycle, w_lo) for the simulation kernel."""
    k = policy.kind
    watch = 1 if k in (Kind.AOI_THRESHOLD, Kind.AOI_MIXTURE) else 0
    if k is Kind.ALWAYS:
        return 0, 0, 1.0, 1.0, False, 1.0
    if k is Kind.NEVER:
        return 0, _NEVER, 1.0, 1.0, False, 1.0
    if k in (Kind.THRESHOLD, Kind.AOI_THRESHOLD):
        return watch, policy.threshold, 1.0, 1.0, False, 1.0
    lo, rho = policy.threshold, policy.rho
    if policy.mixing == "state":
        return watch, lo, rho, 1.0, False, 1.0
    if policy.mixing == "literal":
        return watch, lo, rho, 1.0 - rho, False, 1.0
    if (k is Kind.AOI_MIXTURE or params.p_success > 0) and 0.0 < rho < 1.0:
        len_lo = _mean_cycle_length(params, policy, lo)
        len_hi = _mean_cycle_length(params, policy, lo + 1)
        w_lo = rho * len_hi / (rho * len_hi + (1.0 - rho) * len_lo)
    else:
        w_lo = rho
    return watch, lo, 1.0, 1.0, True, w_lo


def _validate(horizon: int, burn_in: int) -> None:
    if horizon < N_BATCHES:
        raise ValueError(f"horizon must be >= {N_BATCHES} slots for batch means, got {horizon}")
    if burn_in < 0:
        raise ValueError(f"burn_in must be >= 0, got {burn_in}")
    if horizon < 10 * burn_in:
        raise ValueError(f"horizon ({horizon}) must be at least 10 x burn_in ({burn_in})")


def _drive(params, policy, horizon, seed, burn_in, record):
    if policy.kind is Kind.AOI_MIXTURE and policy.mixing == "cycle" and params.p_success == 0:
        raise ValueError("cycle mixing over AoI thresholds needs p_success > 0")
    rng = np.random.default_rng(seed)
    total = burn_in + horizon
    batch_len = horizon // N_BATCHES
    acc = np.zeros((5, N_BATCHES))
    x0 = int(rng.integers(params.num_states))
    # x, xhat, aoii, aoi, current threshold
    state = np.array([x0, x0, 0, 0, 0], dtype=np.int64)
    watch, lo, coin_lo, coin_hi, cycle, w_lo = _kernel_args(params, policy)
    state[4] = lo
    traces = np.zeros((3, total if record else 0), dtype=np.int64)
    t = 0
    while t < total:
        n = min(_CHUNK, total - t)
        u = rng.random((n, 4))
        view = traces[:, t : t + n] if record else np.zeros((3, 0), dtype=np.int64)
        _simulate_chunk(
            u, state, acc, view, record,
            params.num_states, params.p_remain, params.p_transition, params.p_success,
            watch, lo, coin_lo, coin_hi, cycle, w_lo,
            t, burn_in, batch_len,
        )
        t += n
    return acc, batch_len, traces


def run(
    params: SystemParams,
    policy: PolicySpec,
    horizon: int,
    seed: int = 0,
    burn_in: int = DEFAULT_BURN_IN,
) -> SimMetrics:
    """Simulate ``burn_in + horizon`` slots and average the last ``horizon``.

    Means use the first ``N_BATCHES * (horizon // N_BATCHES)`` post-burn-in
    slots so that means and batch-means errors describe the same sample.
    """
    _validate(horizon, burn_in)
    acc, batch_len, _ = _drive(params, policy, horizon, seed, burn_in, record=False)
    batch_means = acc / batch_len
    means = batch_means.mean(axis=1)
    ses = batch_means.std(axis=1, ddof=1) / np.sqrt(N_BATCHES)
    return SimMetrics(
        avg_aoii=float(means[_AOII]),
        avg_aoi=float(means[_AOI]),
        error_rate=float(means[_ERR]),
        tx_fraction=float(means[_TX]),
        zero_fraction=float(means[_ZERO]),
        se_aoii=float(ses[_AOII]),
        se_aoi=float(ses[_AOI]),
        se_error=float(ses[_ERR]),
        se_tx=float(ses[_TX]),
        se_zero=float(ses[_ZERO]),
        horizon=int(horizon),
        burn_in=int(burn_in),
        seed=int(seed),
        policy=policy.tag,
    )


@dataclass(frozen=True)
class Trace:
    aoii: np.ndarray
    aoi: np.ndarray
    transmit: np.ndarray


def trace(params: SystemParams, policy: PolicySpec, horizon: int, seed: int = 0) -> Trace:
    """Slot-by-slot penalties and decisions from ``t = 0`` (no burn-in)."""
    _validate(max(horizon, N_BATCHES), 0)
    _, _, traces = _drive(params, policy, max(horizon, N_BATCHES), seed, 0, record=True)
    return Trace(aoii=traces[0, :horizon], aoi=traces[1, :horizon], transmit=traces[2, :horizon].astype(bool))


@dataclass(frozen=True)
class SweepCell:
    params: SystemParams
    policy: PolicySpec
    tags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SweepRow:
    index: int
    cell: SweepCell
    metrics: SimMetrics


def _run_cell(job: tuple) -> SimMetrics:
    params, policy, horizon, seed, burn_in = job
    return run(params, policy, horizon, seed, burn_in)


def run_sweep(
    cells: Sequence[SweepCell],
    horizon: int,
    base_seed: int = 0,
    burn_in: int = DEFAULT_BURN_IN,
    workers: Optional[int] = None,
) -> list[SweepRow]:
    """Run one simulation per cell; cell ``i`` uses seed ``base_seed + i``.

    With ``workers > 1`` cells run in separate processes; rows always come back
    in cell order and are identical to a sequential run.
    """
    if not cells:
        raise ValueError("run_sweep needs at least one cell")
    _validate(horizon, burn_in)
    jobs = [(c.params, c.policy, horizon, base_seed + i, burn_in) for i, c in enumerate(cells)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    return [SweepRow(i, c, m) for i, (c, m) in enumerate(zip(cells, results))]
