"""Path-integral worldline Monte Carlo for the transverse-field cost chain.

The quantum Gibbs state of H(s) at inverse temperature beta is mapped, by
Suzuki-Trotter discretization with L imaginary-time slices, onto a
classical distribution over worldline configurations x = (x_1, ..., x_L),
each slice a bitstring of n spins with periodic closure x_{L+1} = x_1:

    pi(x)  propto  exp(-(beta*s/L) * sum_j f(|x_j|)) * tanh(omega)^jumps,

where omega = beta*(1-s)/L, |x_j| is the Hamming weight of slice j, and
`jumps` counts temporal bonds whose endpoints disagree.  Constant factors
(cosh(omega) per bond, transverse-field one-body terms) cancel in
Metropolis ratios and are dropped throughout, so log_weight is the
unnormalized log density.

The sampler is the lazy single-site Metropolis chain: with probability
1/2 do nothing, otherwise flip one uniformly chosen (slice, spin) bit and
accept with probability min(1, pi(x')/pi(x)).  At s = 1 the jump factor
is tanh(0) = 0, so any configuration with jumps has zero weight; the
update rule handles that limit exactly (jump-creating flips are always
rejected, jump-removing flips always accepted).

WorldlineState carries integer caches (per-slice weights, in-region
flags, jump count) that the compiled kernels update incrementally; every
cache is exactly recomputable from the bits because the running cost sum
is stored as the integer pair (total weight, in-region slice count)
rather than as an accumulated float.

Exhaustive-enumeration references (enumerate_pi, transition_matrix) are
provided for small nL so the chain can be validated against its exact
stationary law and transition kernel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from spikeqmc import _kernels
from spikeqmc.bits import popcount
from spikeqmc.spike import SpikeParams, in_spike, weight_costs

__all__ = [
    "PimcConfig",
    "SweepStats",
    "WorldlineState",
    "default_slice_count",
    "delta_log_weight",
    "enumerate_pi",
    "load_checkpoint",
    "log_weight",
    "metropolis_step",
    "pi_slice_marginal",
    "save_checkpoint",
    "slice_marginal_sample",
    "sweep",
    "transition_matrix",
    "uniform_state",
]

ENUMERATE_MAX_BITS = 20
TRANSITION_MAX_BITS = 14

_CHECKPOINT_MAGIC = "spikeqmc-worldline-v1"


def default_slice_count(n: int, beta: float, c: float = 1.0) -> int:
    """Slice count ceil(c * n^2 * beta^(3/2)), floored at 2.

    The scaling keeps the Trotter error (per-slice rotation angles) small
    uniformly over the anneal path for the chain sizes and temperatures
    used here; c trades accuracy against per-step cost.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    return max(2, math.ceil(c * n * n * beta**1.5))


@dataclass(frozen=True)
class PimcConfig:
    """Immutable sampler configuration for one (s, beta, L) point.

    omega and log_tanh_omega are derived in __post_init__ and cached;
    log_tanh_omega is -inf exactly when s = 1.
    """

    params: SpikeParams
    beta: float
    num_slices: int
    s: float
    spikeless: bool = False
    omega: float = field(init=False)
    log_tanh_omega: float = field(init=False)

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.num_slices < 2:
            raise ValueError(f"need at least 2 slices, got {self.num_slices}")
        if not 0.0 <= self.s <= 1.0:
            raise ValueError(f"s must lie in [0, 1], got {self.s}")
        omega = self.beta * (1.0 - self.s) / self.num_slices
        object.__setattr__(self, "omega", omega)
        log_tanh = math.log(math.tanh(omega)) if omega > 0 else -math.inf
        object.__setattr__(self, "log_tanh_omega", log_tanh)

    @property
    def site_count(self) -> int:
        return self.num_slices * self.params.n

    def weight_cost_table(self) -> np.ndarray:
        """f(k) for k = 0..n as float64."""
        return weight_costs(self.params, spikeless=self.spikeless)

    def spike_table(self) -> np.ndarray:
        """Region indicator for k = 0..n as uint8 (independent of spikeless:
        spike time is measured on spikeless chains too)."""
        ks = np.arange(self.params.n + 1)
        return in_spike(self.params, ks).astype(np.uint8)

    def _kernel_args(self):
        neg_bsl = -self.beta * self.s / self.num_slices
        return self.weight_cost_table(), self.spike_table(), neg_bsl, self.log_tanh_omega


class WorldlineState:
    """Mutable chain state: bits plus incrementally maintained caches.

    bits is the (L, n) uint8 slice-major array; slice_weights[j] and
    slice_in_spike[j] describe slice j; jump_count counts disagreeing
    temporal bonds over all worldlines (each of the n*L bonds once, so it
    is even: every worldline closes periodically).  The cost sum is kept
    as integers (total weight, in-region slice count) and reassembled as

        cost_sum = total_weight + height * in_region_count

    which matches a fresh recomputation from bits bit-for-bit.
    """

    __slots__ = ("bits", "slice_weights", "slice_in_spike", "_scal",
                 "_fscratch", "_best_bits", "_effective_height")

    def __init__(self, bits: np.ndarray, config: PimcConfig):
        bits = np.ascontiguousarray(bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise ValueError("bits must be a 2-d (slices, spins) array")
        L, n = bits.shape
        if (L, n) != (config.num_slices, config.params.n):
            raise ValueError(
                f"bits shape {bits.shape} does not match config "
                f"({config.num_slices}, {config.params.n})")
        if bits.max(initial=0) > 1:
            raise ValueError("bits must be 0/1 valued")
        self.bits = bits
        self.slice_weights = bits.sum(axis=1, dtype=np.int64)
        spike_lut = config.spike_table()
        self.slice_in_spike = spike_lut[self.slice_weights]
        jumps = int(popcount(np.bitwise_xor(
            np.packbits(bits, axis=1),
            np.packbits(np.roll(bits, -1, axis=0), axis=1))).sum())
        scal = np.zeros(_kernels.SCAL_LEN, dtype=np.int64)
        scal[_kernels.SCAL_JUMPS] = jumps
        scal[_kernels.SCAL_WEIGHT] = int(self.slice_weights.sum())
        scal[_kernels.SCAL_SPIKE] = int(self.slice_in_spike.sum())
        scal[_kernels.SCAL_BEST_W] = int(self.slice_weights.min())
        self._scal = scal
        self._effective_height = 0.0 if config.spikeless else config.params.height
        fvec = config.weight_cost_table()
        best_j = int(np.argmin(fvec[self.slice_weights]))
        self._fscratch = np.array([fvec[self.slice_weights[best_j]]])
        self._best_bits = bits[best_j].copy()

    @property
    def jump_count(self) -> int:
        return int(self._scal[_kernels.SCAL_JUMPS])

    @property
    def total_weight(self) -> int:
        return int(self._scal[_kernels.SCAL_WEIGHT])

    @property
    def spike_slice_count(self) -> int:
        """Number of slices whose weight lies in the spike region (the
        observable averaged in spike-time estimates)."""
        return int(self._scal[_kernels.SCAL_SPIKE])

    @property
    def cached_cost_sum(self) -> float:
        return self.total_weight + self._effective_height * self.spike_slice_count

    @property
    def best_weight_seen(self) -> int:
        return int(self._scal[_kernels.SCAL_BEST_W])

    @property
    def best_cost_seen(self) -> float:
        return float(self._fscratch[_kernels.FSCRATCH_BEST_COST])

    @property
    def best_bits_seen(self) -> np.ndarray:
        return self._best_bits.copy()

    def copy(self, config: PimcConfig) -> "WorldlineState":
        other = WorldlineState(self.bits.copy(), config)
        other._scal[:] = self._scal
        other._fscratch[:] = self._fscratch
        other._best_bits[:] = self._best_bits
        return other


def uniform_state(config: PimcConfig, rng: np.random.Generator) -> WorldlineState:
    """Independent fair-coin bits on every (slice, spin) site."""
    bits = rng.integers(0, 2, size=(config.num_slices, config.params.n),
                        dtype=np.uint8)
    return WorldlineState(bits, config)


def log_weight(state: WorldlineState, config: PimcConfig) -> float:
    """Unnormalized log pi(x); -inf exactly for jumpful states at s = 1."""
    val = -(config.beta * config.s / config.num_slices) * state.cached_cost_sum
    if state.jump_count != 0:
        val += state.jump_count * config.log_tanh_omega
    return val


def delta_log_weight(state: WorldlineState, config: PimcConfig,
                     slice_index: int, spin_index: int) -> float:
    """log pi(x-with-site-flipped) - log pi(x) without touching state.

    Same arithmetic as the compiled kernel (cost difference via the f
    table, jump difference from the two temporal neighbors), so tests can
    hold the increment against full log_weight recomputation.
    """
    L = config.num_slices
    j, i = slice_index, spin_index
    b = int(state.bits[j, i])
    w_old = int(state.slice_weights[j])
    w_new = w_old + 1 - 2 * b
    fvec = config.weight_cost_table()
    jm = state.bits[j - 1 if j > 0 else L - 1, i]
    jp = state.bits[j + 1 if j < L - 1 else 0, i]
    dj = 2 - 2 * (int(b != jm) + int(b != jp))
    dlog = -(config.beta * config.s / L) * (fvec[w_new] - fvec[w_old])
    if dj != 0:
        dlog += dj * config.log_tanh_omega
    return float(dlog)


def metropolis_step(state: WorldlineState, config: PimcConfig,
                    rng: np.random.Generator) -> bool:
    """One lazy Metropolis proposal in place; True if a flip was accepted."""
    return sweep(state, config, 1, rng).accepted == 1


@dataclass(frozen=True)
class SweepStats:
    """Outcome of a block of proposals (lazy steps count as proposals)."""

    proposals: int
    accepted: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0


def sweep(state: WorldlineState, config: PimcConfig, proposals: int,
          rng: np.random.Generator) -> SweepStats:
    """Run `proposals` single-site updates through the compiled kernel."""
    fvec, spike_lut, neg_bsl, log_tanh = config._kernel_args()
    accepted = _kernels.run_metropolis(
        state.bits, state.slice_weights, state.slice_in_spike, state._scal,
        state._fscratch, state._best_bits, fvec, spike_lut, neg_bsl,
        log_tanh, proposals, rng)
    return SweepStats(proposals=proposals, accepted=int(accepted))


def slice_marginal_sample(state: WorldlineState) -> np.ndarray:
    """Copy of the slice-0 bitstring; by cyclic symmetry of pi every slice
    has the same marginal law, so slice 0 is the canonical readout."""
    return state.bits[0].copy()


def _state_tables(config: PimcConfig):
    """cost sums, jump counts, and slice-0 indices for all 2^(nL) states.

    Flat-index convention: bit (j*n + i) of the state index is
    bits[j, i], matching the counting kernel.
    """
    n, L = config.params.n, config.num_slices
    total_bits = n * L
    if total_bits > ENUMERATE_MAX_BITS:
        raise ValueError(
            f"enumeration needs n*L <= {ENUMERATE_MAX_BITS}, got {total_bits}")
    dim = 1 << total_bits
    idx = np.arange(dim, dtype=np.uint64)
    mask = np.uint64((1 << n) - 1)
    fvec = config.weight_cost_table()
    cost_sum = np.zeros(dim)
    jumps = np.zeros(dim, dtype=np.int64)
    slices = [(idx >> np.uint64(j * n)) & mask for j in range(L)]
    for j in range(L):
        cost_sum += fvec[popcount(slices[j])]
        jumps += popcount(slices[j] ^ slices[(j + 1) % L])
    return cost_sum, jumps, slices[0].astype(np.int64)


def _log_weights_table(config: PimcConfig):
    cost_sum, jumps, slice0 = _state_tables(config)
    lw = -(config.beta * config.s / config.num_slices) * cost_sum
    jumpful = jumps > 0
    lw[jumpful] += jumps[jumpful] * config.log_tanh_omega
    return lw, jumps, slice0


def enumerate_pi(config: PimcConfig) -> np.ndarray:
    """Exact normalized pi over all 2^(nL) worldline configurations."""
    lw, _, _ = _log_weights_table(config)
    shift = lw.max()
    w = np.exp(lw - shift)
    return w / w.sum()


def pi_slice_marginal(config: PimcConfig) -> np.ndarray:
    """Exact slice-0 bitstring marginal of pi, as a 2^n vector."""
    lw, _, slice0 = _log_weights_table(config)
    pi = np.exp(lw - lw.max())
    marg = np.bincount(slice0, weights=pi, minlength=1 << config.params.n)
    return marg / marg.sum()


def transition_matrix(config: PimcConfig) -> scipy.sparse.csr_matrix:
    """Exact one-step kernel of the lazy Metropolis chain, row-stochastic.

    Off-diagonal mass at (x, x^e_site) is acceptance/(2*n*L); acceptance
    is built from the structural pieces (cost difference, jump
    difference) so the s = 1 limit is exact: jump-creating moves get 0,
    jump-removing moves get 1.
    """
    n, L = config.params.n, config.num_slices
    total_bits = n * L
    if total_bits > TRANSITION_MAX_BITS:
        raise ValueError(
            f"transition matrix needs n*L <= {TRANSITION_MAX_BITS}, got {total_bits}")
    dim = 1 << total_bits
    idx = np.arange(dim, dtype=np.uint64)
    fvec = config.weight_cost_table()
    slice_bits = [(idx >> np.uint64(j * n)) & np.uint64((1 << n) - 1)
                  for j in range(L)]
    slice_w = np.stack([popcount(s).astype(np.int64) for s in slice_bits], axis=1)
    prop = 0.5 / total_bits
    rows, cols, vals = [], [], []
    diag = np.ones(dim)
    for site in range(total_bits):
        j, i = divmod(site, n)
        b = ((idx >> np.uint64(site)) & np.uint64(1)).astype(np.int64)
        w_old = slice_w[:, j]
        w_new = w_old + 1 - 2 * b
        jm = ((idx >> np.uint64(((j - 1) % L) * n + i)) & np.uint64(1)).astype(np.int64)
        jp = ((idx >> np.uint64(((j + 1) % L) * n + i)) & np.uint64(1)).astype(np.int64)
        dj = 2 - 2 * ((b != jm).astype(np.int64) + (b != jp).astype(np.int64))
        dlog = -(config.beta * config.s / L) * (fvec[w_new] - fvec[w_old])
        jump_term = np.zeros(dim)
        jumpful = dj != 0
        jump_term[jumpful] = dj[jumpful] * config.log_tanh_omega
        with np.errstate(over="ignore"):
            acc = np.minimum(1.0, np.exp(dlog + jump_term))
        rows.append(idx.astype(np.int64))
        cols.append((idx ^ np.uint64(1 << site)).astype(np.int64))
        vals.append(prop * acc)
        diag -= prop * acc
    rows.append(np.arange(dim, dtype=np.int64))
    cols.append(np.arange(dim, dtype=np.int64))
    vals.append(diag)
    mat = scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim))
    return mat


def save_checkpoint(path, state: WorldlineState, config: PimcConfig,
                    seed, step_count: int) -> None:
    """Write a resumable snapshot: JSON header line + packed bit payload."""
    header = {
        "magic": _CHECKPOINT_MAGIC,
        "n": config.params.n,
        "alpha": config.params.alpha,
        "eta": config.params.eta,
        "num_slices": config.num_slices,
        "s": config.s,
        "beta": config.beta,
        "spikeless": config.spikeless,
        "seed": seed,
        "step_count": int(step_count),
    }
    payload = np.packbits(state.bits, axis=None).tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("ascii"))
        fh.write(b"\n")
        fh.write(payload)


def load_checkpoint(path):
    """Inverse of save_checkpoint.

    Returns (state, config, seed, step_count); the state's bits are
    byte-identical to what was saved.
    """
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    header = json.loads(header_line.decode("ascii"))
    if header.get("magic") != _CHECKPOINT_MAGIC:
        raise ValueError(f"not a worldline checkpoint: {path}")
    params = SpikeParams(header["n"], header["alpha"], header["eta"])
    config = PimcConfig(params=params, beta=header["beta"],
                        num_slices=header["num_slices"], s=header["s"],
                        spikeless=header["spikeless"])
    total = config.num_slices * params.n
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8),
                         count=total).reshape(config.num_slices, params.n)
    state = WorldlineState(bits, config)
    return state, config, header["seed"], header["step_count"]
