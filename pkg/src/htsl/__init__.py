"""Heavy-tailed strong laws: growth functions, stable simulators, series certificates, diagnostics."""

from .growth import GrowthFunction, block_base, contraction_constant, doubling_bounds
from .processes import (LfsmSpec, PathEnsemble, QuasiStationarySpec, partial_sum, running_max,
                        simulate_iid, simulate_lfsm, simulate_quasi_stationary, simulate_stable_levy)
from .slln import (SllnCertificate, corollary_series, moment_series, quasi_stationary_series,
                   recursion_certificate, sssi_moment_identity)
from .stable import Gaussian, SeedStream, StableLaw, sample_stable
from .verify import bridge_check, borel_cantelli_budget, decay_diagnostic, decay_diagnostics, tail_exponent

__version__ = "0.1.0"

__all__ = [
    "GrowthFunction", "block_base", "contraction_constant", "doubling_bounds",
    "LfsmSpec", "PathEnsemble", "QuasiStationarySpec", "partial_sum", "running_max",
    "simulate_iid", "simulate_lfsm", "simulate_quasi_stationary", "simulate_stable_levy",
    "SllnCertificate", "corollary_series", "moment_series", "quasi_stationary_series",
    "recursion_certificate", "sssi_moment_identity",
    "Gaussian", "SeedStream", "StableLaw", "sample_stable",
    "bridge_check", "borel_cantelli_budget", "decay_diagnostic", "decay_diagnostics", "tail_exponent",
]
