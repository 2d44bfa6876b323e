"""Spike-time statistics, analytic tail bounds, and chain diagnostics.

The central observable is the spike time of a worldline configuration,

    ST(x) = number of slices whose Hamming weight lies in the spike region,

measured under the *spikeless* stationary law pi-tilde.  Leakage of the
spikeless chain into the spike region is controlled through ST: the
event of interest is ST >= b_theta with

    b_theta = (L / (beta * n^alpha)) * ln(1/theta),

and the analytic side bounds P[ST >= b_theta] by a Chernoff argument
built on closed-form moment bounds E[ST^m].  This module evaluates those
bounds in log-space exactly as displayed (no hidden Theta constants) and
provides the empirical counterparts: Monte Carlo leakage estimates with
batch-means errors, sample moments with autocorrelation-adjusted sample
sizes, and exact enumerations on tiny instances.

Also here: total-variation distance, log-log gap-exponent fits, and the
spectral gap of explicitly enumerable transition matrices, used as the
computable stand-in for mixing-time statements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln, logsumexp
from scipy.stats import beta as beta_dist

from spikeqmc import _kernels, pimc
from spikeqmc.bits import popcount
from spikeqmc.exact import sector_multiplicity, sector_two_j_values
from spikeqmc.pimc import PimcConfig, WorldlineState

__all__ = [
    "BoundReport",
    "LeakageEstimate",
    "SpikeTimeStats",
    "chain_spectral_gap",
    "empirical_moments",
    "estimate_leakage",
    "exact_leakage",
    "fit_gap_exponent",
    "integrated_autocorr_time",
    "mgf_chernoff_bound",
    "moment_bound",
    "sample_spike_times",
    "spike_time",
    "spike_time_distribution",
    "st_threshold",
    "tv_distance",
]

# term-1 truncated exponential sums are evaluated exactly up to this many
# slices, by closed-form upper bound beyond
_EXACT_SUM_MAX_L = 200_000


def spike_time(state: WorldlineState) -> int:
    """Number of slices currently inside the spike region."""
    return int(state.slice_in_spike.sum())


def st_threshold(theta: float, config: PimcConfig) -> float:
    """Tail threshold b_theta = (L/(beta*n^alpha)) * ln(1/theta)."""
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    n = config.params.n
    return config.num_slices / (config.beta * n**config.params.alpha) \
        * math.log(1.0 / theta)


def moment_bound(m: int, L: int, n: int, eta: float) -> float:
    """log E[ST^m] upper bound under the spikeless stationary law.

    Three cases by the size of m relative to the slice count:

        m <  L      : (2 L n^(eta-1/2))^m
        L <= m < 2L : (2 e L)^L n^(L(eta-1/2))
        m >= 2L     : m^L L^L n^(L(eta-1/2))
    """
    if m < 1:
        raise ValueError(f"moment order must be >= 1, got {m}")
    tail = L * (eta - 0.5) * math.log(n)
    if m < L:
        return m * (math.log(2 * L) + (eta - 0.5) * math.log(n))
    if m < 2 * L:
        return L * math.log(2 * math.e * L) + tail
    return L * math.log(m) + L * math.log(L) + tail


@dataclass(frozen=True)
class BoundReport:
    """Chernoff bound evaluation at one (lambda, theta) pair.

    All bound fields are natural logs of the bounded quantities;
    small_lambda flags lambda below n^(1/2-eta)/L, where the first-term
    control behind the moment generating function bound degrades.
    """

    theta: float
    b_theta: float
    lam: float
    mgf_bound: float
    chernoff_bound: float
    small_lambda: bool


def _log_truncated_exp_sum(log_x: float, L: int) -> float:
    """log sum_{m=0}^{L} x^m / m!, exact for moderate L.

    For large L the sum is replaced by the smaller of two rigorous upper
    bounds: e^x (the full series) and (L+1) times the largest term (the
    summand is unimodal in m).
    """
    x = math.exp(log_x) if log_x < 700 else math.inf
    if L <= _EXACT_SUM_MAX_L:
        ms = np.arange(L + 1)
        return float(logsumexp(ms * log_x - gammaln(ms + 1)))
    m_star = min(float(L), math.floor(x)) if math.isfinite(x) else float(L)
    log_peak = m_star * log_x - float(gammaln(m_star + 1))
    return min(x, log_peak + math.log(L + 1))


def mgf_chernoff_bound(lam: float, theta: float, config: PimcConfig) -> BoundReport:
    """Evaluate the explicit three-term MGF bound and its Chernoff form.

    E[e^(lam*ST)] under the spikeless law is bounded by

        sum_{m<=L} (2 lam L n^(eta-1/2))^m / m!                    (term 1)
      + L * lam^(2L) (2eL)^L n^(L(eta-1/2)) / L!                    (term 2)
      + e^(-1) L^L n^(L(eta-1/2)) (e*lam)^(2L) e^(e*lam)            (term 3)

    combined in log-space; the Chernoff log-bound on
    log P[ST >= b_theta] is the MGF log-bound minus lam*b_theta.
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    b_theta = st_threshold(theta, config)
    n = config.params.n
    eta = config.params.eta
    L = config.num_slices
    log_n = math.log(n)
    log_lam = math.log(lam)
    tail = L * (eta - 0.5) * log_n

    log_x = log_lam + math.log(2 * L) + (eta - 0.5) * log_n
    term1 = _log_truncated_exp_sum(log_x, L)
    term2 = math.log(L) + 2 * L * log_lam + L * math.log(2 * math.e * L) \
        + tail - float(gammaln(L + 1))
    term3 = -1.0 + L * math.log(L) + tail + 2 * L * (1.0 + log_lam) \
        + math.e * lam
    mgf = float(logsumexp([term1, term2, term3]))
    return BoundReport(
        theta=theta,
        b_theta=b_theta,
        lam=lam,
        mgf_bound=mgf,
        chernoff_bound=mgf - lam * b_theta,
        small_lambda=lam < n**(0.5 - eta) / L,
    )


# ---------------------------------------------------------------------------
# sampling-based estimators


def sample_spike_times(config: PimcConfig, num_samples: int, thinning: int,
                       rng: np.random.Generator,
                       burn_in_sweeps: int = 20) -> np.ndarray:
    """Draw ST samples from a fresh chain, one per `thinning` proposals.

    Burn-in is counted in sweep units of n*L proposals.  Returns an int64
    array of length num_samples.
    """
    if num_samples < 1:
        raise ValueError("need at least one sample")
    if thinning < 1:
        raise ValueError("thinning must be >= 1")
    state = pimc.uniform_state(config, rng)
    pimc.sweep(state, config, burn_in_sweeps * config.site_count, rng)
    fvec, lut, neg_bsl, lt = config._kernel_args()
    out = np.empty((num_samples, 3), dtype=np.int64)
    _kernels.run_recording(state.bits, state.slice_weights,
                           state.slice_in_spike, state._scal, state._fscratch,
                           state._best_bits, fvec, lut, neg_bsl, lt,
                           thinning, out, rng)
    return out[:, 0].copy()


@dataclass(frozen=True)
class SpikeTimeStats:
    """Summary of an ST sample: raw draws, low moments, effective size."""

    samples: np.ndarray
    mean: float
    variance: float
    empirical_moments: dict
    n_effective: float

    @classmethod
    def from_samples(cls, samples, m_max: int = 4,
                     num_slices: int | None = None) -> "SpikeTimeStats":
        samples = np.asarray(samples, dtype=np.int64)
        if samples.size == 0:
            raise ValueError("need at least one ST sample")
        if samples.min() < 0:
            raise ValueError("spike times are nonnegative")
        if num_slices is not None and samples.max() > num_slices:
            raise ValueError("spike time exceeds the slice count")
        moments = {m: float(np.mean(samples.astype(float)**m))
                   for m in range(1, m_max + 1)}
        return cls(samples=samples, mean=moments[1],
                   variance=float(np.var(samples)),
                   empirical_moments=moments,
                   n_effective=samples.size / integrated_autocorr_time(samples))


def empirical_moments(stats: SpikeTimeStats, m_max: int) -> dict:
    """Sample moments E[ST^m] for m = 1..m_max."""
    samples = stats.samples.astype(float)
    return {m: float(np.mean(samples**m)) for m in range(1, m_max + 1)}


def integrated_autocorr_time(x, c: float = 5.0) -> float:
    """tau_int = 1 + 2*sum rho_k with a self-consistent cutoff window
    (smallest W with W >= c*tau_int(W)); 1 for iid or constant series."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2 or np.var(x) == 0:
        return 1.0
    f = np.fft.rfft(x - x.mean(), 2 ** int(np.ceil(np.log2(2 * n))))
    acov = np.fft.irfft(f * np.conj(f))[:n].real / n
    rho = acov / acov[0]
    tau = 2.0 * np.cumsum(rho) - 1.0  # tau_int(W) = 1 + 2 sum_{k=1..W}
    window = np.arange(n) >= c * tau
    w = int(np.argmax(window)) if window.any() else n - 1
    return float(max(tau[w], 1.0))


@dataclass(frozen=True)
class LeakageEstimate:
    """Empirical tail probability P[ST >= b_theta] with uncertainty."""

    estimate: float
    stderr: float
    successes: int
    num_samples: int
    b_theta: float
    upper95: float


def estimate_leakage(config: PimcConfig, theta: float, num_samples: int,
                     thinning: int, rng: np.random.Generator,
                     burn_in_sweeps: int = 20) -> LeakageEstimate:
    """Monte Carlo estimate of P[ST >= b_theta] under the spikeless law.

    The standard error comes from batch means with batches of 10 sweep
    units of proposals, which absorbs residual autocorrelation left after
    thinning; with zero observed successes the point estimate is 0 and
    upper95 (Clopper-Pearson, one-sided) carries the information.
    """
    if not config.spikeless:
        raise ValueError("leakage is defined under the spikeless chain")
    b_theta = st_threshold(theta, config)
    st = sample_spike_times(config, num_samples, thinning, rng,
                            burn_in_sweeps=burn_in_sweeps)
    hits = st >= b_theta
    successes = int(hits.sum())
    p_hat = successes / num_samples

    batch_len = max(1, round(10 * config.site_count / thinning))
    num_batches = num_samples // batch_len
    if num_batches >= 2:
        trimmed = hits[:num_batches * batch_len].reshape(num_batches, batch_len)
        batch_means = trimmed.mean(axis=1)
        stderr = float(batch_means.std(ddof=1) / math.sqrt(num_batches))
    else:
        stderr = math.sqrt(max(p_hat * (1 - p_hat), 1e-300) / num_samples)

    if successes == num_samples:
        upper = 1.0
    else:
        upper = float(beta_dist.ppf(0.95, successes + 1, num_samples - successes))
    return LeakageEstimate(estimate=p_hat, stderr=stderr, successes=successes,
                           num_samples=num_samples, b_theta=b_theta,
                           upper95=upper)


def exact_leakage(config: PimcConfig, theta: float) -> float:
    """P[ST >= b_theta] by exhaustive enumeration (n*L <= 20)."""
    pi = pimc.enumerate_pi(config)
    st = enumerate_spike_times(config)
    return float(pi[st >= st_threshold(theta, config)].sum())


def enumerate_spike_times(config: PimcConfig) -> np.ndarray:
    """ST for every worldline configuration, indexed like enumerate_pi."""
    n, L = config.params.n, config.num_slices
    if n * L > pimc.ENUMERATE_MAX_BITS:
        raise ValueError(
            f"enumeration needs n*L <= {pimc.ENUMERATE_MAX_BITS}, got {n * L}")
    idx = np.arange(1 << (n * L), dtype=np.uint64)
    mask = np.uint64((1 << n) - 1)
    lut = config.spike_table().astype(np.int64)
    st = np.zeros(idx.shape, dtype=np.int64)
    for j in range(L):
        st += lut[popcount((idx >> np.uint64(j * n)) & mask)]
    return st


def spike_time_distribution(config: PimcConfig) -> np.ndarray:
    """Exact P[ST = t] under pi, via the total-spin sector decomposition.

    Summing the worldline weight over one slice step applies the operator
    D exp(2 omega S_x): the site factor D = e^{-(beta s/L) f(w)} is a
    function of the total weight (hence of S_z) and the jump factor
    exponentiates the total S_x, since the per-spin step matrix is
    [[1, tanh w], [tanh w, 1]] which is proportional to e^{omega sigma_x}.
    Both preserve total-spin sectors, so the trace over all 2^(n L)
    configurations splits into (2J+1)-dimensional sector traces weighted
    by the standard multiplicities.  Tagging in-region weights with a
    formal variable z and expanding the L-step product in powers of z
    gives the exact law of the in-region slice count, at cost polynomial
    in n and L instead of the 2^(n L) of exhaustive enumeration.
    Returns a length L+1 vector summing to one.
    """
    n, L = config.params.n, config.num_slices
    omega = config.beta * (1.0 - config.s) / L
    a = config.beta * config.s / L
    fvec = config.weight_cost_table()
    in_region = config.spike_table().astype(bool)

    polys = []
    scales = []
    for two_j in sector_two_j_values(n):
        kv = np.arange((n - two_j) // 2, (n + two_j) // 2 + 1)
        dim = kv.size
        if dim == 1:
            expm_sx = np.ones((1, 1))
            log_scale = 0.0
        else:
            k = kv[:-1].astype(np.float64)
            prod = (two_j * (two_j + 2)
                    - (n - 2.0 * k) * (n - 2.0 * k - 2.0)) / 4.0
            eps, vecs = eigh_tridiagonal(np.zeros(dim), 0.5 * np.sqrt(prod))
            expm_sx = (vecs * np.exp(2.0 * omega * (eps - eps[-1]))) @ vecs.T
            np.maximum(expm_sx, 0.0, out=expm_sx)
            log_scale = 2.0 * omega * eps[-1]
        site = np.exp(-a * (fvec[kv] - fvec[kv].min()))
        log_scale += -a * fvec[kv].min()
        A = site[:, None] * expm_sx
        tag = in_region[kv][:, None]
        A0 = np.where(tag, 0.0, A)
        A1 = np.where(tag, A, 0.0)
        coeff = np.zeros((L + 1, dim, dim))
        coeff[0], coeff[1] = A0, A1
        log_scale *= L
        for _ in range(L - 1):
            shifted = np.roll(coeff, 1, axis=0)
            shifted[0] = 0.0
            coeff = A0 @ coeff + A1 @ shifted
            c = coeff.max()
            coeff /= c
            log_scale += math.log(c)
        mult = sector_multiplicity(n, two_j)
        polys.append(mult * np.einsum("dkk->d", coeff))
        scales.append(log_scale)
    top = max(scales)
    dist = sum(p * math.exp(sc - top) for p, sc in zip(polys, scales))
    return dist / dist.sum()


# ---------------------------------------------------------------------------
# generic distribution and spectrum utilities


def tv_distance(p, q) -> float:
    """Total variation distance (1/2) * sum |p - q| between two
    distributions on the same finite support."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"support mismatch: {p.shape} vs {q.shape}")
    for name, vec in (("p", p), ("q", q)):
        total = vec.sum()
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"{name} is not normalized: sums to {total!r}")
        if vec.min() < -1e-12:
            raise ValueError(f"{name} has negative entries")
    return float(0.5 * np.abs(p - q).sum())


def fit_gap_exponent(ns, gaps) -> tuple:
    """Least-squares slope and r^2 of log(gap) against log(n)."""
    ns = np.asarray(ns, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if ns.size != gaps.size or ns.size < 4:
        raise ValueError("need at least 4 matched (n, gap) points")
    if ns.min() <= 0 or gaps.min() <= 0:
        raise ValueError("sizes and gaps must be positive")
    x, y = np.log(ns), np.log(gaps)
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean())**2).sum())
    r_squared = 1.0 if ss_tot == 0 else 1.0 - float((residuals**2).sum()) / ss_tot
    return float(slope), r_squared


def _stationary_distribution(P: scipy.sparse.csr_matrix) -> np.ndarray:
    dim = P.shape[0]
    if dim <= 512:
        vals, vecs = np.linalg.eig(P.toarray().T)
        top = int(np.argmax(vals.real))
        pi = np.abs(vecs[:, top].real)
    else:
        _, vecs = scipy.sparse.linalg.eigs(P.T.tocsc(), k=1, which="LM",
                                           v0=np.ones(dim))
        pi = np.abs(vecs[:, 0].real)
    return pi / pi.sum()


def chain_spectral_gap(matrix, pi=None) -> float:
    """1 - lambda_2 of a reversible row-stochastic matrix.

    The matrix is conjugated by diag(sqrt(pi)) and symmetrized (which is
    a no-op up to floating-point noise when the chain is reversible), so
    the spectrum is real; pi is computed from the matrix when not given.
    Requires a strictly positive stationary law.
    """
    P = scipy.sparse.csr_matrix(matrix, dtype=float)
    if P.shape[0] != P.shape[1]:
        raise ValueError("transition matrix must be square")
    rows = np.asarray(P.sum(axis=1)).ravel()
    if np.abs(rows - 1.0).max() > 1e-8:
        raise ValueError("rows must each sum to 1")
    pi = _stationary_distribution(P) if pi is None else np.asarray(pi, float)
    if pi.min() <= 0:
        raise ValueError("stationary distribution must be strictly positive")
    root = np.sqrt(pi)
    S = scipy.sparse.diags(root) @ P @ scipy.sparse.diags(1.0 / root)
    S = (S + S.T) * 0.5
    dim = P.shape[0]
    if dim <= 512:
        vals = np.linalg.eigvalsh(S.toarray())
    else:
        vals = scipy.sparse.linalg.eigsh(S, k=2, which="LA",
                                         return_eigenvectors=False)
    vals = np.sort(vals)
    return float(1.0 - vals[-2])
