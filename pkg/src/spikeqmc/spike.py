"""Spike cost function on the hypercube and its spectral-gap regimes.

The cost of a bit string depends only on its Hamming weight ``k``.  Away
from the spike region the cost is simply ``k``.  Inside a window of
half-width ``n**eta / 2`` centered at ``n / 4`` a barrier of height
``n**alpha`` is added:

    f(k) = k + n**alpha   if  n/4 - n**eta/2 <= k <= n/4 + n**eta/2
    f(k) = k              otherwise

Both window edges are real numbers and the comparison is inclusive, so
for small ``n`` the window may contain zero or one integer weight.  The
spikeless control cost is ``f(k) = k`` everywhere.

The minimum gap of the interpolating Hamiltonian

    H(s) = (1 - s) * sum_i (-sigma_x^i) + s * f

falls into one of three regimes depending on (alpha, eta):

* alpha + eta <= 1/2           constant gap,
* alpha + 2*eta <= 1 otherwise polynomial gap, Delta ~ n**(1/2 - alpha - eta),
* otherwise                    stretched-exponential gap,
                               Delta ~ exp(-c * n**(alpha + 2*eta - 1)).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpikeParams:
    """Problem size and spike exponents.

    Attributes:
        n: number of spins, n >= 2.
        alpha: spike height exponent, in [0, 1).
        eta: spike width exponent, in [0, 1).
    """

    n: int
    alpha: float
    eta: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not (0.0 <= self.eta < 1.0):
            raise ValueError(f"eta must lie in [0, 1), got {self.eta}")
        lo, hi = self.region_bounds()
        if lo < 0.0 or hi > self.n:
            raise ValueError(
                f"spike region [{lo}, {hi}] sticks out of the weight range "
                f"[0, {self.n}]; choose a larger n or a smaller eta"
            )

    @property
    def height(self) -> float:
        """Spike height n**alpha."""
        return float(self.n) ** self.alpha

    def region_bounds(self) -> tuple[float, float]:
        """Real-valued window edges (n/4 - n**eta/2, n/4 + n**eta/2)."""
        half_width = 0.5 * float(self.n) ** self.eta
        center = self.n / 4.0
        return center - half_width, center + half_width

    @property
    def regime(self) -> "Regime":
        return classify_regime(self.alpha, self.eta)

    def gap_law(self) -> "GapLaw":
        return predicted_gap_law(self.alpha, self.eta)


class Regime(enum.Enum):
    CONSTANT = "constant"
    POLYNOMIAL = "polynomial"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class GapLaw:
    """Predicted scaling of the minimum spectral gap with n.

    For CONSTANT the gap is bounded below independent of n and
    ``exponent`` is 0.  For POLYNOMIAL the law is Delta ~ n**exponent
    with exponent = 1/2 - alpha - eta < 0.  For EXPONENTIAL the law is
    log Delta ~ -n**exponent with exponent = alpha + 2*eta - 1 > 0.
    """

    regime: Regime
    exponent: float


def classify_regime(alpha: float, eta: float) -> Regime:
    """Classify the gap regime from the spike exponents alone.

    Ties go to the milder regime: alpha + eta == 1/2 is CONSTANT and
    alpha + 2*eta == 1 is POLYNOMIAL.
    """
    if alpha + eta <= 0.5:
        return Regime.CONSTANT
    if alpha + 2.0 * eta <= 1.0:
        return Regime.POLYNOMIAL
    return Regime.EXPONENTIAL


def predicted_gap_law(alpha: float, eta: float) -> GapLaw:
    """Gap-scaling descriptor for the given spike exponents."""
    regime = classify_regime(alpha, eta)
    if regime is Regime.CONSTANT:
        return GapLaw(regime, 0.0)
    if regime is Regime.POLYNOMIAL:
        return GapLaw(regime, 0.5 - alpha - eta)
    return GapLaw(regime, alpha + 2.0 * eta - 1.0)


def in_spike(params: SpikeParams, k) -> bool | np.ndarray:
    """Whether Hamming weight k falls in the spike window (inclusive)."""
    lo, hi = params.region_bounds()
    k = np.asarray(k)
    result = (k >= lo) & (k <= hi)
    return bool(result) if result.ndim == 0 else result


def cost(params: SpikeParams, k: int, spikeless: bool = False) -> float:
    """Cost of a single Hamming weight.

    Args:
        params: problem parameters.
        k: Hamming weight, must lie in [0, n].
        spikeless: if True, return the control cost k with no barrier.

    Returns:
        f(k) as a float.
    """
    if not 0 <= k <= params.n:
        raise ValueError(f"weight {k} outside [0, {params.n}]")
    value = float(k)
    if not spikeless and in_spike(params, k):
        value += params.height
    return value


def weight_costs(params: SpikeParams, spikeless: bool = False) -> np.ndarray:
    """Vector of costs f(0..n), shape (n + 1,)."""
    k = np.arange(params.n + 1, dtype=np.float64)
    f = k.copy()
    if not spikeless:
        f[in_spike(params, k)] += params.height
    return f


def spike_weights(params: SpikeParams) -> np.ndarray:
    """Integer Hamming weights inside the spike window (may be empty)."""
    lo, hi = params.region_bounds()
    first = int(np.ceil(lo))
    last = int(np.floor(hi))
    return np.arange(max(first, 0), min(last, params.n) + 1, dtype=np.int64)
