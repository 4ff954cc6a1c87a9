"""Limit theorems for heavy-tailed affine recursions ``X_n = M_n X_{n-1} + Q_n``.

Exact moment functions of the driving measure, reproducible Monte Carlo of the
chain, tail-measure estimators, the limit laws of normalised partial sums,
a discretised Fourier transfer operator, and statistical verification.
"""
from .engine import (TrajectoryBatch, brute_force_distribution, partial_sums, sample_dual_operator,
                     sample_eta, sample_stationary)
from .errors import (AffineLimitsError, EstimationError, HypothesisError, InputError, NumericError, RegimeError,
                     StructureError, UnsupportedError)
from .groups import (BlockStructure, GroupStructure, Similarity, adjoint, apply, compose, detect_group_structure,
                     exact_subsequence, norm_of, normalizer_schedule, tau)
from .law import (LimitLawSpec, Regime, C_2plus, C_alpha_direct, C_alpha_via_delta, build_limit_law,
                  centering_schedule, classify_regime, phi, stability_check)
from .measure import (MuSpec, kappa, load_mu, m_alpha, mu_from_dict, mu_to_dict, solve_alpha,
                      validate_hypothesis_H)
from .spectral import OperatorGrid, assemble, dominant_eigenvalue, expansion_fit
from .tails import angular_measure, hill_alpha, lambda_tilde, tail_profile
from .verify import density_at_zero, ecf, local_limit_check, verify_convergence

__version__ = "0.1.0"


def spec_path(name: str):
    """Path of a shipped example config, e.g. ``spec_path("alpha3_lattice")``."""
    from importlib import resources

    return resources.files(__name__).joinpath("specs", f"{name}.json")
