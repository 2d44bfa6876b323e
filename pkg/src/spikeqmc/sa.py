"""Classical simulated annealing baseline on the spike cost.

The chain is lazy single-bit-flip Metropolis directly on {0,1}^n with
stationary weight exp(-beta*f(|w|)) at each inverse temperature, swept
through an ascending beta schedule (geometric by default, a generous
standard choice).  It shares the RunReport record with the quantum
harness so paired comparisons at matched single-flip budgets read off
the same fields; the spike-time trace degenerates to the per-stage
fraction of time the single bitstring spent inside the spike region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from spikeqmc import _kernels
from spikeqmc.annealer import RunReport
from spikeqmc.spike import SpikeParams, in_spike, weight_costs

__all__ = [
    "SaConfig",
    "geometric_beta_schedule",
    "run_sa",
    "transition_matrix",
]


def geometric_beta_schedule(n: int, num_stages: int = 100,
                            beta_start: float = 0.1,
                            beta_end: float | None = None) -> np.ndarray:
    """Geometric ramp from beta_start to beta_end (default 2n)."""
    if num_stages < 1 or beta_start <= 0:
        raise ValueError("need num_stages >= 1 and beta_start > 0")
    if beta_end is None:
        beta_end = 2.0 * n
    if beta_end < beta_start:
        raise ValueError("beta_end must be >= beta_start")
    return np.geomspace(beta_start, beta_end, num_stages)


@dataclass(frozen=True)
class SaConfig:
    """One SA run: cost instance, ascending beta ramp, per-stage budget."""

    params: SpikeParams
    beta_schedule: np.ndarray
    steps_per_beta: int
    seed: object = 0
    spikeless: bool = False

    def __post_init__(self):
        sched = np.asarray(self.beta_schedule, dtype=float)
        object.__setattr__(self, "beta_schedule", sched)
        if sched.ndim != 1 or sched.size < 1:
            raise ValueError("beta_schedule must be a nonempty 1-d array")
        if sched.min() < 0:
            raise ValueError("inverse temperatures must be nonnegative")
        if sched.size > 1 and np.diff(sched).min() < 0:
            raise ValueError("beta_schedule must be ascending")
        if self.steps_per_beta < 1:
            raise ValueError("steps_per_beta must be >= 1")

    @property
    def total_steps(self) -> int:
        return int(self.beta_schedule.size) * self.steps_per_beta


def run_sa(config: SaConfig) -> RunReport:
    """Anneal one bitstring through the beta ramp and report."""
    params = config.params
    n = params.n
    rng = np.random.default_rng(config.seed)
    bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    fvec = weight_costs(params, spikeless=config.spikeless)
    lut = in_spike(params, np.arange(n + 1)).astype(np.uint8)

    scal = np.zeros(_kernels.SCAL_LEN, dtype=np.int64)
    w0 = int(bits.sum())
    scal[_kernels.SCAL_WEIGHT] = w0
    scal[_kernels.SCAL_SPIKE] = int(lut[w0])
    scal[_kernels.SCAL_BEST_W] = w0
    fscratch = np.array([fvec[w0]])
    best_bits = bits.copy()

    stages = config.beta_schedule
    acceptance = np.full(stages.size, np.nan)
    mean_weight = np.full(stages.size, np.nan)
    mean_spike = np.full(stages.size, np.nan)
    wall_steps = 0
    incomplete = False
    try:
        for k, beta in enumerate(stages):
            wsum0 = scal[_kernels.SCAL_WSUM]
            stsum0 = scal[_kernels.SCAL_STSUM]
            accepted = _kernels.run_sa(bits, scal, fscratch, best_bits, fvec,
                                       lut, float(beta),
                                       config.steps_per_beta, rng)
            steps = config.steps_per_beta
            acceptance[k] = accepted / steps
            mean_weight[k] = (scal[_kernels.SCAL_WSUM] - wsum0) / steps
            mean_spike[k] = (scal[_kernels.SCAL_STSUM] - stsum0) / steps
            wall_steps += steps
    except KeyboardInterrupt:
        incomplete = True

    return RunReport(
        algorithm="sa", n=n, alpha=params.alpha, eta=params.eta,
        spikeless=config.spikeless, num_slices=1, seed=config.seed, beta=None,
        stage_label="beta", stage_values=stages.copy(),
        acceptance_rates=acceptance, mean_slice_weights=mean_weight,
        spike_time_trace=mean_spike, final_bitstring=bits.copy(),
        final_weight=int(bits.sum()),
        best_weight_seen=int(scal[_kernels.SCAL_BEST_W]),
        best_cost_seen=float(fscratch[_kernels.FSCRATCH_BEST_COST]),
        best_bitstring=best_bits.copy(),
        wall_steps=wall_steps, incomplete=incomplete,
    )


def transition_matrix(params: SpikeParams, beta: float,
                      spikeless: bool = False) -> np.ndarray:
    """Exact one-step kernel of the lazy SA chain at fixed beta, dense
    over all 2^n bitstrings (n <= 10)."""
    n = params.n
    if n > 10:
        raise ValueError(f"dense SA kernel needs n <= 10, got {n}")
    fvec = weight_costs(params, spikeless=spikeless)
    dim = 1 << n
    idx = np.arange(dim)
    weights = np.array([int(v).bit_count() for v in idx])
    P = np.zeros((dim, dim))
    prop = 0.5 / n
    for i in range(n):
        flipped = idx ^ (1 << i)
        w_new = weights + 1 - 2 * ((idx >> i) & 1)
        dlog = -beta * (fvec[w_new] - fvec[weights])
        acc = np.minimum(1.0, np.exp(np.minimum(dlog, 0.0)))
        P[idx, flipped] += prop * acc
    P[idx, idx] = 1.0 - P.sum(axis=1)
    return P
