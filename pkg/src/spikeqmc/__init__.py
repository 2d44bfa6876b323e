"""Simulated quantum annealing on the spike cost function.

The package bundles three layers:

* exact linear-algebra oracles for the transverse-field spike Hamiltonian
  (symmetric-subspace and spin-sector diagonalization, Gibbs marginals,
  gap scans),
* a Trotterized path-integral Monte Carlo engine with single-site
  Metropolis updates, plus exhaustive-enumeration oracles for tiny
  instances,
* annealing harnesses (SQA schedule runner and a classical simulated
  annealing baseline) and spike-time / mixing statistics.
"""

from spikeqmc.spike import GapLaw, Regime, SpikeParams, classify_regime, cost, predicted_gap_law
from spikeqmc.pimc import PimcConfig, WorldlineState, default_slice_count
from spikeqmc.annealer import RunReport, Schedule, build_schedule, default_beta, run_sqa
from spikeqmc.sa import SaConfig, geometric_beta_schedule, run_sa

__version__ = "0.1.0"

__all__ = [
    "SpikeParams",
    "Regime",
    "GapLaw",
    "cost",
    "classify_regime",
    "predicted_gap_law",
    "PimcConfig",
    "WorldlineState",
    "default_slice_count",
    "Schedule",
    "RunReport",
    "build_schedule",
    "default_beta",
    "run_sqa",
    "SaConfig",
    "geometric_beta_schedule",
    "run_sa",
    "__version__",
]
