"""Discretized adiabatic schedules and the end-to-end SQA run.

The optimizer sweeps the interpolation knob s from 0 toward 1 on a
uniform grid with spacing

    delta_s = c_s / (n * beta * (1 + ln n)),

running a fixed budget of Metropolis proposals at each grid value and
carrying the worldline state from one s to the next (warm start).  The
final grid point is s_max = 1 - delta_s: the s = 1 endpoint is excluded
because the jump factor degenerates there.  beta and the slice count are
held fixed across the whole run.

Initialization is uniform random bits over all n*L sites with a short
burn-in at s = 0; the exact s = 0 stationary law still penalizes jumps,
so the burn-in lets the worldlines decorrelate before the schedule
starts.  The per-s budget is a knob (default 10 sweep units of n*L
proposals each): the theory's quasi-stationary duration involves proof
objects that cannot be evaluated, so distributional convergence is
checked empirically on small instances instead.

Reports carry the final slice-0 sample, the best (minimum-cost)
bitstring seen on any slice at any time, and per-stage acceptance,
mean-weight, and spike-time traces.  The same RunReport type also
serves the classical simulated-annealing baseline, with the stage axis
labeled by beta instead of s.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from spikeqmc import _kernels, pimc
from spikeqmc.pimc import PimcConfig, default_slice_count
from spikeqmc.spike import SpikeParams

__all__ = [
    "RunReport",
    "Schedule",
    "build_schedule",
    "default_beta",
    "run_sqa",
]


def default_beta(params: SpikeParams, c: float = 1.0) -> float:
    """Inverse temperature c * n^(1/2 + alpha + eta), the scale at which
    the thermal state projects onto the ground state for this model."""
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    return c * params.n ** (0.5 + params.alpha + params.eta)


@dataclass(frozen=True)
class Schedule:
    """Uniform s-grid {0, delta_s, ..., 1 - delta_s} with per-point budget."""

    s_values: np.ndarray
    delta_s: float
    sweeps_per_s: int
    beta: float

    def __post_init__(self):
        s = np.asarray(self.s_values, dtype=float)
        object.__setattr__(self, "s_values", s)
        if s.ndim != 1 or s.size < 1:
            raise ValueError("schedule needs at least one s value")
        if self.sweeps_per_s < 1:
            raise ValueError("sweeps_per_s must be >= 1")
        if s[0] != 0.0:
            raise ValueError("schedule must start at s = 0")
        if s.size > 1:
            gaps = np.diff(s)
            if gaps.min() <= 0:
                raise ValueError("s_values must be strictly increasing")
            if np.abs(gaps - self.delta_s).max() > 1e-12:
                raise ValueError("s_values must be uniformly spaced")
        if abs(s[-1] - (1.0 - self.delta_s)) > 1e-12:
            raise ValueError("schedule must end at 1 - delta_s")

    @property
    def num_points(self) -> int:
        return int(self.s_values.size)


def build_schedule(n: int, beta: float, c_s: float = 1.0,
                   sweeps_multiplier: float = 10.0,
                   num_slices: int | None = None) -> Schedule:
    """Uniform schedule with delta_s = c_s/(n*beta*(1+ln n)).

    The grid is snapped to an exact integer count M = round(1/delta_s)
    so that the last point lands on 1 - 1/M exactly.  The per-point
    budget is ceil(sweeps_multiplier * n * L) proposals, L defaulting to
    default_slice_count(n, beta).
    """
    if n < 2 or beta <= 0 or c_s <= 0 or sweeps_multiplier <= 0:
        raise ValueError("schedule inputs must be positive (and n >= 2)")
    raw = c_s / (n * beta * (1.0 + math.log(n)))
    if raw >= 1.0:
        raise ValueError(f"step size {raw} >= 1; increase n*beta or lower c_s")
    num_points = round(1.0 / raw)
    delta_s = 1.0 / num_points
    L = default_slice_count(n, beta) if num_slices is None else num_slices
    return Schedule(s_values=np.arange(num_points) / num_points,
                    delta_s=delta_s,
                    sweeps_per_s=math.ceil(sweeps_multiplier * n * L),
                    beta=beta)


@dataclass
class RunReport:
    """Record of one annealing run (quantum or classical baseline).

    stage_values carries the swept knob: s for SQA (fixed beta), beta for
    the SA baseline.  Traces are per-stage time averages; stages never
    reached on an interrupted run hold NaN and incomplete is set.
    """

    algorithm: str
    n: int
    alpha: float
    eta: float
    spikeless: bool
    num_slices: int
    seed: object
    stage_label: str
    stage_values: np.ndarray
    acceptance_rates: np.ndarray
    mean_slice_weights: np.ndarray
    spike_time_trace: np.ndarray
    final_bitstring: np.ndarray
    final_weight: int
    best_weight_seen: int
    best_cost_seen: float
    best_bitstring: np.ndarray
    wall_steps: int
    beta: float | None = None
    incomplete: bool = False

    def to_json(self) -> str:
        payload = {
            "algorithm": self.algorithm,
            "n": self.n,
            "alpha": self.alpha,
            "eta": self.eta,
            "spikeless": self.spikeless,
            "num_slices": self.num_slices,
            "seed": self.seed,
            "beta": self.beta,
            "stage_label": self.stage_label,
            "stage_values": self.stage_values.tolist(),
            "acceptance_rates": self.acceptance_rates.tolist(),
            "mean_slice_weights": self.mean_slice_weights.tolist(),
            "spike_time_trace": self.spike_time_trace.tolist(),
            "final_bitstring": self.final_bitstring.tolist(),
            "final_weight": self.final_weight,
            "best_weight_seen": self.best_weight_seen,
            "best_cost_seen": self.best_cost_seen,
            "best_bitstring": self.best_bitstring.tolist(),
            "wall_steps": self.wall_steps,
            "incomplete": self.incomplete,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        d = json.loads(text)
        return cls(
            algorithm=d["algorithm"], n=d["n"], alpha=d["alpha"],
            eta=d["eta"], spikeless=d["spikeless"],
            num_slices=d["num_slices"], seed=d["seed"], beta=d["beta"],
            stage_label=d["stage_label"],
            stage_values=np.asarray(d["stage_values"], dtype=float),
            acceptance_rates=np.asarray(d["acceptance_rates"], dtype=float),
            mean_slice_weights=np.asarray(d["mean_slice_weights"], dtype=float),
            spike_time_trace=np.asarray(d["spike_time_trace"], dtype=float),
            final_bitstring=np.asarray(d["final_bitstring"], dtype=np.uint8),
            final_weight=d["final_weight"],
            best_weight_seen=d["best_weight_seen"],
            best_cost_seen=d["best_cost_seen"],
            best_bitstring=np.asarray(d["best_bitstring"], dtype=np.uint8),
            wall_steps=d["wall_steps"], incomplete=d["incomplete"],
        )

    def trace_csv(self) -> str:
        lines = [f"{self.stage_label},acceptance_rate,mean_slice_weight,"
                 "mean_spike_time"]
        for row in zip(self.stage_values, self.acceptance_rates,
                       self.mean_slice_weights, self.spike_time_trace):
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def run_sqa(params: SpikeParams, *, beta: float | None = None,
            num_slices: int | None = None, schedule: Schedule | None = None,
            seed=0, spikeless: bool = False, burn_in_sweeps: int = 5,
            sweeps_multiplier: float = 10.0, c_s: float = 1.0,
            stage_callback=None) -> RunReport:
    """Anneal one worldline chain along the schedule and report.

    Knobs left unset fall back to default_beta / default_slice_count /
    build_schedule.  The state is carried bit-identically from each s to
    the next; a KeyboardInterrupt mid-schedule yields a partial report
    with incomplete=True rather than losing the run.
    """
    n = params.n
    if schedule is not None:
        if beta is not None and beta != schedule.beta:
            raise ValueError("beta disagrees with schedule.beta")
        beta = schedule.beta
    else:
        if beta is None:
            beta = default_beta(params)
    L = default_slice_count(n, beta) if num_slices is None else num_slices
    if schedule is None:
        schedule = build_schedule(n, beta, c_s=c_s,
                                  sweeps_multiplier=sweeps_multiplier,
                                  num_slices=L)

    rng = np.random.default_rng(seed)
    state = pimc.uniform_state(
        PimcConfig(params=params, beta=beta, num_slices=L, s=0.0,
                   spikeless=spikeless), rng)
    burn_cfg = PimcConfig(params=params, beta=beta, num_slices=L, s=0.0,
                          spikeless=spikeless)
    burn_steps = burn_in_sweeps * n * L
    pimc.sweep(state, burn_cfg, burn_steps, rng)

    M = schedule.num_points
    acceptance = np.full(M, np.nan)
    mean_weight = np.full(M, np.nan)
    mean_spike = np.full(M, np.nan)
    wall_steps = burn_steps
    incomplete = False
    try:
        for k in range(M):
            s = float(schedule.s_values[k])
            cfg = PimcConfig(params=params, beta=beta, num_slices=L, s=s,
                             spikeless=spikeless)
            wsum0 = state._scal[_kernels.SCAL_WSUM]
            stsum0 = state._scal[_kernels.SCAL_STSUM]
            stats = pimc.sweep(state, cfg, schedule.sweeps_per_s, rng)
            steps = stats.proposals
            acceptance[k] = stats.acceptance_rate
            mean_weight[k] = (state._scal[_kernels.SCAL_WSUM] - wsum0) \
                / (steps * L)
            mean_spike[k] = (state._scal[_kernels.SCAL_STSUM] - stsum0) / steps
            wall_steps += steps
            if stage_callback is not None:
                stage_callback(state, k, s)
    except KeyboardInterrupt:
        incomplete = True

    final_bits = pimc.slice_marginal_sample(state)
    return RunReport(
        algorithm="sqa", n=n, alpha=params.alpha, eta=params.eta,
        spikeless=spikeless, num_slices=L, seed=seed, beta=beta,
        stage_label="s", stage_values=schedule.s_values.copy(),
        acceptance_rates=acceptance, mean_slice_weights=mean_weight,
        spike_time_trace=mean_spike, final_bitstring=final_bits,
        final_weight=int(final_bits.sum()),
        best_weight_seen=state.best_weight_seen,
        best_cost_seen=state.best_cost_seen,
        best_bitstring=state.best_bits_seen,
        wall_steps=wall_steps, incomplete=incomplete,
    )
