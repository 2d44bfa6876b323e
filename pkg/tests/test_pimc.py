"""Worldline Monte Carlo engine tests.

The small-instance strategy: enumerate_pi and transition_matrix are
exact references for n*L <= 20 (resp. 14), so the sampler's stationary
law, reversibility, and empirical transition frequencies can all be held
against closed-form answers before any large run is trusted.
"""

import math

import numpy as np
import pytest

from spikeqmc import _kernels, pimc
from spikeqmc.pimc import PimcConfig, WorldlineState
from spikeqmc.spike import SpikeParams
from spikeqmc.stats import tv_distance


def make_config(n=4, alpha=0.6, eta=0.5, beta=2.0, L=3, s=0.5, spikeless=False):
    return PimcConfig(params=SpikeParams(n, alpha, eta), beta=beta,
                      num_slices=L, s=s, spikeless=spikeless)


def brute_force_pi(config):
    """Reference distribution built one log_weight call at a time."""
    n, L = config.params.n, config.num_slices
    dim = 1 << (n * L)
    lw = np.empty(dim)
    for idx in range(dim):
        bits = np.array([[(idx >> (j * n + i)) & 1 for i in range(n)]
                         for j in range(L)], dtype=np.uint8)
        lw[idx] = pimc.log_weight(WorldlineState(bits, config), config)
    w = np.exp(lw - lw.max())
    return w / w.sum()


# ---------------------------------------------------------------------------
# configuration and state construction


def test_config_validation():
    params = SpikeParams(4, 0.6, 0.5)
    with pytest.raises(ValueError):
        PimcConfig(params=params, beta=0.0, num_slices=4, s=0.5)
    with pytest.raises(ValueError):
        PimcConfig(params=params, beta=-1.0, num_slices=4, s=0.5)
    with pytest.raises(ValueError):
        PimcConfig(params=params, beta=1.0, num_slices=1, s=0.5)
    with pytest.raises(ValueError):
        PimcConfig(params=params, beta=1.0, num_slices=4, s=-0.1)
    with pytest.raises(ValueError):
        PimcConfig(params=params, beta=1.0, num_slices=4, s=1.1)


def test_config_cached_fields_match_formulas():
    cfg = make_config(beta=3.0, L=5, s=0.25)
    assert cfg.omega == 3.0 * 0.75 / 5
    assert cfg.log_tanh_omega == math.log(math.tanh(cfg.omega))
    edge = make_config(beta=3.0, L=5, s=1.0)
    assert edge.omega == 0.0
    assert edge.log_tanh_omega == -math.inf


def test_state_rejects_bad_bits():
    cfg = make_config(n=4, L=3)
    with pytest.raises(ValueError):
        WorldlineState(np.zeros((3, 5), dtype=np.uint8), cfg)
    with pytest.raises(ValueError):
        WorldlineState(np.zeros(12, dtype=np.uint8), cfg)
    bad = np.zeros((3, 4), dtype=np.uint8)
    bad[0, 0] = 2
    with pytest.raises(ValueError):
        WorldlineState(bad, cfg)


def test_state_caches_from_known_bits():
    # two slices of weight 2 and 1; one worldline column differs between
    # all three slices
    cfg = make_config(n=4, L=3)
    bits = np.array([[1, 1, 0, 0],
                     [1, 0, 0, 0],
                     [1, 1, 1, 0]], dtype=np.uint8)
    st = WorldlineState(bits, cfg)
    assert st.slice_weights.tolist() == [2, 1, 3]
    assert st.total_weight == 6
    # column 1 pattern (1,0,1): bonds 1-0, 0-1, 1-1 -> wait, periodic
    # (1,0),(0,1),(1,1) -> 2 jumps; column 2 pattern (0,0,1) -> 2 jumps
    assert st.jump_count == 4
    # region for n=4, eta=0.5: [0, 2], so weights 1 and 2 are inside
    assert st.slice_in_spike.tolist() == [1, 1, 0]
    assert st.spike_slice_count == 2
    assert st.cached_cost_sum == 6 + 2 * cfg.params.height


def test_cached_cost_sum_matches_direct_recomputation():
    rng = np.random.default_rng(11)
    for spikeless in (False, True):
        for _ in range(25):
            n = int(rng.integers(2, 9))
            eta = 0.0 if n < 8 else float(rng.uniform(0, 0.5))
            cfg = make_config(n=n, alpha=float(rng.uniform(0, 1)), eta=eta,
                              beta=float(rng.uniform(0.5, 5)),
                              L=int(rng.integers(2, 9)),
                              s=float(rng.uniform(0, 1)), spikeless=spikeless)
            st = pimc.uniform_state(cfg, rng)
            fvec = cfg.weight_cost_table()
            # integer recomposition is exact; a per-slice float sum is
            # the same number up to association order
            height = 0.0 if spikeless else cfg.params.height
            exact = int(st.slice_weights.sum()) \
                + height * int(st.slice_in_spike.sum())
            assert st.cached_cost_sum == exact
            loose = float(fvec[st.slice_weights].sum())
            assert st.cached_cost_sum == pytest.approx(loose, rel=1e-12)


# ---------------------------------------------------------------------------
# log weights


def test_log_weight_all_zero_spikeless_is_zero():
    cfg = make_config(n=3, eta=0.0, spikeless=True, s=0.7)
    st = WorldlineState(np.zeros((3, 3), dtype=np.uint8), cfg)
    assert pimc.log_weight(st, cfg) == 0.0


def test_log_weight_single_excited_worldline():
    # one column follows (0,1,1,0) around the ring: 2 jumps, 2 units of
    # weight, everything else zero
    params = SpikeParams(2, 0.5, 0.0)
    cfg = PimcConfig(params=params, beta=1.7, num_slices=4, s=0.6,
                     spikeless=True)
    bits = np.zeros((4, 2), dtype=np.uint8)
    bits[1, 0] = bits[2, 0] = 1
    st = WorldlineState(bits, cfg)
    assert st.jump_count == 2
    expected = -(1.7 * 0.6 / 4) * 2.0 + 2 * cfg.log_tanh_omega
    assert pimc.log_weight(st, cfg) == pytest.approx(expected, rel=1e-15)


def test_log_weight_s1_jumpful_is_minus_inf():
    cfg = make_config(n=2, eta=0.0, L=4, s=1.0)
    bits = np.zeros((4, 2), dtype=np.uint8)
    bits[1, 0] = 1
    st = WorldlineState(bits, cfg)
    assert pimc.log_weight(st, cfg) == -math.inf
    flat = WorldlineState(np.ones((4, 2), dtype=np.uint8), cfg)
    assert math.isfinite(pimc.log_weight(flat, cfg))


def test_delta_log_weight_matches_full_recomputation():
    # 1e5 random single flips across a mix of couplings, spike on and off
    rng = np.random.default_rng(3)
    cases = [make_config(n=4, L=4, s=0.5),
             make_config(n=4, L=4, s=0.95, beta=4.0),
             make_config(n=5, alpha=0.9, L=3, s=0.2, beta=0.7),
             make_config(n=4, L=4, s=0.5, spikeless=True)]
    flips_per_case = 25_000
    for cfg in cases:
        st = pimc.uniform_state(cfg, rng)
        lw = pimc.log_weight(st, cfg)
        for _ in range(flips_per_case):
            j = int(rng.integers(0, cfg.num_slices))
            i = int(rng.integers(0, cfg.params.n))
            d = pimc.delta_log_weight(st, cfg, j, i)
            bits = st.bits.copy()
            bits[j, i] ^= 1
            st = WorldlineState(bits, cfg)
            lw_new = pimc.log_weight(st, cfg)
            assert abs(lw_new - (lw + d)) < 1e-10
            lw = lw_new


# ---------------------------------------------------------------------------
# exact enumeration oracles


def test_enumerate_pi_matches_brute_force():
    for cfg in (make_config(n=2, eta=0.0, L=3, s=0.5, beta=1.3),
                make_config(n=3, eta=0.0, L=2, s=0.8, beta=2.0),
                make_config(n=2, eta=0.0, L=4, s=0.0, beta=1.0)):
        pi = pimc.enumerate_pi(cfg)
        ref = brute_force_pi(cfg)
        assert pi.sum() == pytest.approx(1.0, abs=1e-13)
        assert np.abs(pi - ref).max() < 1e-12


def test_enumerate_pi_s1_kills_jumpful_states():
    cfg = make_config(n=2, eta=0.0, L=3, s=1.0, beta=1.3)
    pi = pimc.enumerate_pi(cfg)
    _, jumps, _ = pimc._state_tables(cfg)
    assert np.all(pi[jumps > 0] == 0.0)
    assert pi.sum() == pytest.approx(1.0, abs=1e-13)


def test_enumerate_pi_size_guard():
    cfg = make_config(n=8, eta=0.0, L=3)
    with pytest.raises(ValueError):
        pimc.enumerate_pi(cfg)


def test_slice_marginals_cyclically_symmetric():
    # aggregate the full law onto each slice by hand; all must agree with
    # the slice-0 marginal to floating-point accuracy
    cfg = make_config(n=3, eta=0.0, L=3, s=0.55, beta=1.8)
    pi = pimc.enumerate_pi(cfg)
    marg0 = pimc.pi_slice_marginal(cfg)
    idx = np.arange(pi.size, dtype=np.uint64)
    mask = np.uint64((1 << 3) - 1)
    for j in range(3):
        sj = ((idx >> np.uint64(j * 3)) & mask).astype(np.int64)
        margj = np.bincount(sj, weights=pi, minlength=8)
        assert np.abs(margj - marg0).max() < 1e-12


def test_slice_marginal_uniform_at_s0():
    # at s = 0 the weight depends only on the jump pattern, which is
    # invariant under flipping any whole worldline, so every bitstring is
    # equally likely regardless of beta
    for beta in (1e-6, 1.0, 20.0):
        cfg = make_config(n=2, eta=0.0, L=4, s=0.0, beta=beta)
        marg = pimc.pi_slice_marginal(cfg)
        assert np.abs(marg - 0.25).max() < 1e-14


def test_slice_marginal_sample_returns_copy():
    cfg = make_config(n=4, L=3)
    st = pimc.uniform_state(cfg, np.random.default_rng(0))
    samp = pimc.slice_marginal_sample(st)
    assert np.array_equal(samp, st.bits[0])
    samp[:] = 1 - samp
    assert not np.array_equal(samp, st.bits[0])


# ---------------------------------------------------------------------------
# exact transition kernel


def transition_configs():
    return [make_config(n=2, eta=0.0, L=3, s=0.5, beta=1.0),
            make_config(n=2, eta=0.0, L=3, s=0.0, beta=2.0),
            make_config(n=3, alpha=0.8, eta=0.0, L=2, s=0.9, beta=3.0),
            make_config(n=2, eta=0.0, L=2, s=0.99, beta=5.0, spikeless=True)]


def test_transition_matrix_rows_and_laziness():
    for cfg in transition_configs():
        P = pimc.transition_matrix(cfg)
        dense = P.toarray()
        assert np.abs(dense.sum(axis=1) - 1.0).max() < 1e-12
        assert dense.min() >= 0.0
        assert dense.diagonal().min() >= 0.5 - 1e-12


def test_transition_matrix_detailed_balance():
    # pi(x) P(x,y) must equal pi(y) P(y,x) on every edge
    for cfg in transition_configs() + [make_config(n=2, eta=0.0, L=3, s=1.0)]:
        pi = pimc.enumerate_pi(cfg)
        flow = pi[:, None] * pimc.transition_matrix(cfg).toarray()
        assert np.abs(flow - flow.T).max() < 1e-12


def test_transition_matrix_stationarity():
    for cfg in transition_configs():
        pi = pimc.enumerate_pi(cfg)
        P = pimc.transition_matrix(cfg)
        assert np.abs(pi @ P.toarray() - pi).max() < 1e-13


def test_transition_matrix_size_guard():
    cfg = make_config(n=4, eta=0.5, L=4)
    with pytest.raises(ValueError):
        pimc.transition_matrix(cfg)


# ---------------------------------------------------------------------------
# sampler dynamics against the exact references


def run_counted(cfg, steps, seed):
    rng = np.random.default_rng(seed)
    st = pimc.uniform_state(cfg, rng)
    dim = 1 << cfg.site_count
    counts = np.zeros((dim, dim), dtype=np.int64)
    fvec, lut, neg_bsl, lt = cfg._kernel_args()
    idx0 = int(sum(int(b) << (j * cfg.params.n + i)
                   for (j, i), b in np.ndenumerate(st.bits)))
    _kernels.run_counting(st.bits, st.slice_weights, st.slice_in_spike,
                          st._scal, st._fscratch, st._best_bits, fvec, lut,
                          neg_bsl, lt, steps, idx0, counts, rng)
    return st, counts


def test_empirical_transition_frequencies_match_kernel():
    # 10^7 proposals at (n=2, L=3, s=0.5, beta=1); every observed cell
    # with a decently large expected count must sit within 5 standard
    # errors (multiplicity-adjusted: ~450 cells are checked)
    cfg = make_config(n=2, eta=0.0, L=3, s=0.5, beta=1.0)
    steps = 10_000_000
    st, counts = run_counted(cfg, steps, seed=20240817)
    fresh = WorldlineState(st.bits.copy(), cfg)
    assert fresh.jump_count == st.jump_count  # counting kernel kept caches
    P = pimc.transition_matrix(cfg).toarray()
    visits = counts.sum(axis=1)
    assert counts.sum() == steps
    worst = 0.0
    checked = 0
    for x in range(P.shape[0]):
        if visits[x] == 0:
            continue
        for y in np.nonzero(P[x])[0]:
            expect = visits[x] * P[x, y]
            if expect < 100:
                continue
            sigma = math.sqrt(visits[x] * P[x, y] * (1 - P[x, y]))
            worst = max(worst, abs(counts[x, y] - expect) / sigma)
            checked += 1
    assert checked > 200
    assert worst < 5.0
    # the chain also never visits a state it cannot reach in one flip
    reachable = (P > 0)
    assert not np.any(counts[~reachable])


def test_long_run_occupation_matches_pi():
    # time-average occupation over 12e6 steps vs the exact law
    cfg = make_config(n=2, eta=0.0, L=3, s=0.6, beta=1.5)
    _, counts = run_counted(cfg, 12_000_000, seed=5)
    occupation = counts.sum(axis=1) / counts.sum()
    assert tv_distance(occupation, pimc.enumerate_pi(cfg)) < 0.01


def test_slice0_weight_marginal_long_run():
    # same comparison through the slice-0 bitstring marginal, using the
    # recording kernel the production estimators rely on
    cfg = make_config(n=3, alpha=0.7, eta=0.0, L=4, s=0.5, beta=1.2)
    rng = np.random.default_rng(99)
    st = pimc.uniform_state(cfg, rng)
    pimc.sweep(st, cfg, 50_000, rng)  # burn-in
    fvec, lut, neg_bsl, lt = cfg._kernel_args()
    out = np.empty((200_000, 3), dtype=np.int64)
    _kernels.run_recording(st.bits, st.slice_weights, st.slice_in_spike,
                           st._scal, st._fscratch, st._best_bits,
                           fvec, lut, neg_bsl, lt, 10, out, rng)
    empirical = np.bincount(out[:, 2], minlength=4) / out.shape[0]
    exact_bitstrings = pimc.pi_slice_marginal(cfg)
    weights = np.array([bin(v).count("1") for v in range(8)])
    exact = np.bincount(weights, weights=exact_bitstrings, minlength=4)
    assert tv_distance(empirical, exact) < 0.01


def test_sweep_zero_steps_is_identity():
    cfg = make_config()
    rng = np.random.default_rng(1)
    st = pimc.uniform_state(cfg, rng)
    before_bits = st.bits.copy()
    before_scal = st._scal.copy()
    stats = pimc.sweep(st, cfg, 0, rng)
    assert stats.proposals == 0 and stats.accepted == 0
    assert stats.acceptance_rate == 0.0
    assert np.array_equal(st.bits, before_bits)
    assert np.array_equal(st._scal, before_scal)


def test_metropolis_step_moves_and_reports():
    cfg = make_config(n=4, L=4, s=0.3, beta=1.0)
    rng = np.random.default_rng(2)
    st = pimc.uniform_state(cfg, rng)
    flips = 0
    for _ in range(400):
        before = st.bits.copy()
        accepted = pimc.metropolis_step(st, cfg, rng)
        changed = int((st.bits != before).sum())
        assert changed == (1 if accepted else 0)
        flips += accepted
    assert 0 < flips < 400


def test_caches_exact_after_long_sweeps():
    rng = np.random.default_rng(42)
    for cfg in (make_config(n=6, alpha=0.8, eta=0.3, L=8, s=0.45, beta=3.0),
                make_config(n=4, L=2, s=0.7, beta=2.0),
                make_config(n=5, eta=0.0, L=5, s=0.98, beta=6.0, spikeless=True)):
        st = pimc.uniform_state(cfg, rng)
        pimc.sweep(st, cfg, 300_000, rng)
        fresh = WorldlineState(st.bits.copy(), cfg)
        assert fresh.jump_count == st.jump_count
        assert fresh.total_weight == st.total_weight
        assert fresh.spike_slice_count == st.spike_slice_count
        assert np.array_equal(fresh.slice_weights, st.slice_weights)
        assert np.array_equal(fresh.slice_in_spike, st.slice_in_spike)
        assert fresh.cached_cost_sum == st.cached_cost_sum
        assert st.jump_count % 2 == 0


def test_jump_count_even_invariant():
    # every worldline is a closed loop, so its disagreements come in pairs
    rng = np.random.default_rng(8)
    cfg = make_config(n=3, eta=0.0, L=7, s=0.5, beta=1.0)
    st = pimc.uniform_state(cfg, rng)
    for _ in range(50):
        pimc.sweep(st, cfg, 137, rng)
        assert st.jump_count % 2 == 0


def test_s1_chain_never_creates_jumps():
    cfg = make_config(n=4, L=6, s=1.0, beta=3.0)
    rng = np.random.default_rng(13)
    st = pimc.uniform_state(cfg, rng)
    prev = st.jump_count
    for _ in range(60):
        pimc.sweep(st, cfg, 1000, rng)
        assert st.jump_count <= prev
        prev = st.jump_count
    assert st.jump_count == 0  # plenty of time to anneal the loops away


def test_best_seen_tracking():
    cfg = make_config(n=6, alpha=0.9, eta=0.3, L=6, s=0.9, beta=5.0)
    rng = np.random.default_rng(77)
    st = pimc.uniform_state(cfg, rng)
    lows = [int(st.slice_weights.min())]
    for _ in range(40):
        pimc.sweep(st, cfg, 2_000, rng)
        lows.append(int(st.slice_weights.min()))
    assert st.best_weight_seen <= min(lows)
    fvec = cfg.weight_cost_table()
    assert st.best_cost_seen <= fvec[min(lows)]
    assert fvec[int(st.best_bits_seen.sum())] == st.best_cost_seen


def test_deterministic_replay():
    cfg = make_config(n=5, eta=0.0, L=4, s=0.4, beta=2.5)
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(314159)
        st = pimc.uniform_state(cfg, rng)
        pimc.sweep(st, cfg, 100_000, rng)
        runs.append((st.bits.copy(), st._scal.copy()))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert np.array_equal(runs[0][1], runs[1][1])


# ---------------------------------------------------------------------------
# slice count heuristic and checkpointing


def test_default_slice_count_examples():
    assert pimc.default_slice_count(4, 4.0) == 128
    assert pimc.default_slice_count(10, 10.0) == 3163
    assert pimc.default_slice_count(2, 1e-3) == 2  # floor clamp
    assert pimc.default_slice_count(4, 4.0, c=0.5) == 64
    with pytest.raises(ValueError):
        pimc.default_slice_count(4, 0.0)
    with pytest.raises(ValueError):
        pimc.default_slice_count(4, 1.0, c=-1.0)


def test_checkpoint_round_trip(tmp_path):
    cfg = make_config(n=6, alpha=0.75, eta=0.4, L=5, s=0.62, beta=3.25,
                      spikeless=False)
    rng = np.random.default_rng(4)
    st = pimc.uniform_state(cfg, rng)
    pimc.sweep(st, cfg, 12_345, rng)
    path = tmp_path / "chain.ckpt"
    pimc.save_checkpoint(path, st, cfg, seed=987654321, step_count=12_345)
    st2, cfg2, seed, steps = pimc.load_checkpoint(path)
    assert np.array_equal(st2.bits, st.bits)
    assert cfg2 == cfg
    assert seed == 987654321 and steps == 12_345
    assert st2.jump_count == st.jump_count
    assert st2.cached_cost_sum == st.cached_cost_sum


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b'{"magic": "something-else"}\n\x00\x01')
    with pytest.raises(ValueError):
        pimc.load_checkpoint(path)
