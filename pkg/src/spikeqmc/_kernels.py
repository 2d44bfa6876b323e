"""Compiled inner loops for the worldline Metropolis chain.

The single-site update: lazy coin, uniform site (slice j, spin i),
incremental log-weight difference

    dlog = -(beta*s/L) * (f(w+dw) - f(w)) + djumps * log(tanh(omega)),

acceptance with probability min(1, exp(dlog)).  The jump term is added
only when djumps != 0 so the s = 1 limit (log tanh = -inf) never forms
0 * inf, and exp is evaluated only for dlog < 0 so it never overflows.
The acceptance uniform is drawn on every non-lazy proposal regardless of
dlog, which keeps the RNG stream layout independent of the state and
makes replay trivially deterministic.

Scalar caches ride in one int64 array so the kernels can update them in
place; indices are the SCAL_* constants.  SCAL_WSUM and SCAL_STSUM
accumulate the post-step totals of weight and in-spike slice count over
every step (lazy included) for cheap time averages.

run_metropolis is the hot path and is deliberately monolithic: routing
the update body through a shared helper, even with inline="always",
measured ~3.5x slower.  run_counting repeats the body because it needs a
per-step hook; both copies are held against the exact transition matrix
by the chain tests, which is what keeps them in sync.
"""

from __future__ import annotations

import math

from numba import njit

SCAL_JUMPS = 0
SCAL_WEIGHT = 1
SCAL_SPIKE = 2
SCAL_BEST_W = 3
SCAL_WSUM = 4
SCAL_STSUM = 5
SCAL_LEN = 6

FSCRATCH_BEST_COST = 0
FSCRATCH_LEN = 1


@njit(cache=True, nogil=True)
def run_metropolis(bits, slice_w, slice_spike, scal, fscratch, best_bits, fvec,
                   spike_lut, neg_bsl, log_tanh, steps, rng):
    """Run `steps` proposals in place; returns the number accepted."""
    L, n = bits.shape
    nl = L * n
    accepted = 0
    for _ in range(steps):
        if rng.random() >= 0.5:
            site = int(rng.integers(0, nl))
            j = site // n
            i = site - j * n
            b = int(bits[j, i])
            delta_w = 1 - 2 * b
            w_old = int(slice_w[j])
            w_new = w_old + delta_w
            jm = bits[j - 1 if j > 0 else L - 1, i]
            jp = bits[j + 1 if j < L - 1 else 0, i]
            before = (1 if b != jm else 0) + (1 if b != jp else 0)
            dj = 2 - 2 * before
            dlog = neg_bsl * (fvec[w_new] - fvec[w_old])
            if dj != 0:
                dlog += dj * log_tanh
            u = rng.random()
            if dlog >= 0.0 or u < math.exp(dlog):
                bits[j, i] = 1 - b
                slice_w[j] = w_new
                sp_new = spike_lut[w_new]
                scal[SCAL_JUMPS] += dj
                scal[SCAL_WEIGHT] += delta_w
                scal[SCAL_SPIKE] += sp_new - slice_spike[j]
                slice_spike[j] = sp_new
                if w_new < scal[SCAL_BEST_W]:
                    scal[SCAL_BEST_W] = w_new
                if fvec[w_new] < fscratch[FSCRATCH_BEST_COST]:
                    fscratch[FSCRATCH_BEST_COST] = fvec[w_new]
                    for c in range(n):
                        best_bits[c] = bits[j, c]
                accepted += 1
        scal[SCAL_WSUM] += scal[SCAL_WEIGHT]
        scal[SCAL_STSUM] += scal[SCAL_SPIKE]
    return accepted


@njit(cache=True, nogil=True)
def run_recording(bits, slice_w, slice_spike, scal, fscratch, best_bits, fvec,
                  spike_lut, neg_bsl, log_tanh, thin, out, rng):
    """Advance thin steps per row of `out`, recording (ST, total weight,
    slice-0 weight) after each block; returns the number accepted."""
    accepted = 0
    for r in range(out.shape[0]):
        accepted += run_metropolis(bits, slice_w, slice_spike, scal, fscratch,
                                   best_bits, fvec, spike_lut, neg_bsl,
                                   log_tanh, thin, rng)
        out[r, 0] = scal[SCAL_SPIKE]
        out[r, 1] = scal[SCAL_WEIGHT]
        out[r, 2] = slice_w[0]
    return accepted


@njit(cache=True, nogil=True)
def run_sa(bits, scal, fscratch, best_bits, fvec, spike_lut, beta, steps, rng):
    """Lazy single-bit-flip Metropolis on one n-bit string with
    stationary weight exp(-beta*f(|w|)); returns the number accepted.

    Reuses the SCAL_* layout: WEIGHT is the current Hamming weight,
    SPIKE the current in-region indicator, JUMPS unused.
    """
    n = bits.shape[0]
    accepted = 0
    for _ in range(steps):
        if rng.random() >= 0.5:
            i = int(rng.integers(0, n))
            b = int(bits[i])
            w_old = int(scal[SCAL_WEIGHT])
            w_new = w_old + 1 - 2 * b
            dlog = -beta * (fvec[w_new] - fvec[w_old])
            u = rng.random()
            if dlog >= 0.0 or u < math.exp(dlog):
                bits[i] = 1 - b
                scal[SCAL_WEIGHT] = w_new
                scal[SCAL_SPIKE] = spike_lut[w_new]
                if w_new < scal[SCAL_BEST_W]:
                    scal[SCAL_BEST_W] = w_new
                if fvec[w_new] < fscratch[FSCRATCH_BEST_COST]:
                    fscratch[FSCRATCH_BEST_COST] = fvec[w_new]
                    for c in range(n):
                        best_bits[c] = bits[c]
                accepted += 1
        scal[SCAL_WSUM] += scal[SCAL_WEIGHT]
        scal[SCAL_STSUM] += scal[SCAL_SPIKE]
    return accepted


@njit(cache=True, nogil=True)
def run_sa_counting(bits, scal, fscratch, best_bits, fvec, spike_lut, beta,
                    steps, state_index, counts, rng):
    """Test support: run_sa with empirical transition counting, indexed
    by the bitstring value (bit i of the index is bits[i])."""
    n = bits.shape[0]
    idx = state_index
    for _ in range(steps):
        new_idx = idx
        if rng.random() >= 0.5:
            i = int(rng.integers(0, n))
            b = int(bits[i])
            w_old = int(scal[SCAL_WEIGHT])
            w_new = w_old + 1 - 2 * b
            dlog = -beta * (fvec[w_new] - fvec[w_old])
            u = rng.random()
            if dlog >= 0.0 or u < math.exp(dlog):
                bits[i] = 1 - b
                scal[SCAL_WEIGHT] = w_new
                scal[SCAL_SPIKE] = spike_lut[w_new]
                if w_new < scal[SCAL_BEST_W]:
                    scal[SCAL_BEST_W] = w_new
                if fvec[w_new] < fscratch[FSCRATCH_BEST_COST]:
                    fscratch[FSCRATCH_BEST_COST] = fvec[w_new]
                    for c in range(n):
                        best_bits[c] = bits[c]
                new_idx = idx ^ (1 << i)
        counts[idx, new_idx] += 1
        idx = new_idx
        scal[SCAL_WSUM] += scal[SCAL_WEIGHT]
        scal[SCAL_STSUM] += scal[SCAL_SPIKE]
    return idx


@njit(cache=True, nogil=True)
def run_counting(bits, slice_w, slice_spike, scal, fscratch, best_bits, fvec,
                 spike_lut, neg_bsl, log_tanh, steps, state_index, counts, rng):
    """Test support: accumulate empirical transition counts.

    counts[x, y] is incremented each step (rejections and lazy steps land
    on the diagonal).  state_index must match bits under the flat
    index-bit convention index_bit(j*n + i) = bits[j, i].  Returns the
    final state index.
    """
    L, n = bits.shape
    nl = L * n
    idx = state_index
    for _ in range(steps):
        new_idx = idx
        if rng.random() >= 0.5:
            site = int(rng.integers(0, nl))
            j = site // n
            i = site - j * n
            b = int(bits[j, i])
            delta_w = 1 - 2 * b
            w_old = int(slice_w[j])
            w_new = w_old + delta_w
            jm = bits[j - 1 if j > 0 else L - 1, i]
            jp = bits[j + 1 if j < L - 1 else 0, i]
            before = (1 if b != jm else 0) + (1 if b != jp else 0)
            dj = 2 - 2 * before
            dlog = neg_bsl * (fvec[w_new] - fvec[w_old])
            if dj != 0:
                dlog += dj * log_tanh
            u = rng.random()
            if dlog >= 0.0 or u < math.exp(dlog):
                bits[j, i] = 1 - b
                slice_w[j] = w_new
                sp_new = spike_lut[w_new]
                scal[SCAL_JUMPS] += dj
                scal[SCAL_WEIGHT] += delta_w
                scal[SCAL_SPIKE] += sp_new - slice_spike[j]
                slice_spike[j] = sp_new
                if w_new < scal[SCAL_BEST_W]:
                    scal[SCAL_BEST_W] = w_new
                if fvec[w_new] < fscratch[FSCRATCH_BEST_COST]:
                    fscratch[FSCRATCH_BEST_COST] = fvec[w_new]
                    for c in range(n):
                        best_bits[c] = bits[j, c]
                new_idx = idx ^ (1 << site)
        counts[idx, new_idx] += 1
        idx = new_idx
        scal[SCAL_WSUM] += scal[SCAL_WEIGHT]
        scal[SCAL_STSUM] += scal[SCAL_SPIKE]
    return idx
