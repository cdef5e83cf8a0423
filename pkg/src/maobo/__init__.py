"""Mixture-aware preference-based many-objective Bayesian optimization.

Learns a Dirichlet-process mixture of Chebyshev preference archetypes from
pairwise comparisons, proposes designs by mixture expected improvement over
independent per-objective GP surrogates, and selects comparisons by
information-theoretic query policies (inter/intra/hybrid).
"""

from .core import (
    DesignPoint,
    OutcomeVector,
    PreferenceDatum,
    RunConfig,
    RunRecord,
    SimplexVector,
    load_run,
    rng_stream,
    save_run,
)
from .scalarize import (
    ChebyshevUtilityParams,
    MixtureParams,
    chebyshev_utility,
    lipschitz_bounds,
    mixture_utility,
    weighted_sum_utility,
)

__version__ = "0.1.0"

__all__ = [
    "DesignPoint",
    "OutcomeVector",
    "PreferenceDatum",
    "RunConfig",
    "RunRecord",
    "SimplexVector",
    "load_run",
    "rng_stream",
    "save_run",
    "ChebyshevUtilityParams",
    "MixtureParams",
    "chebyshev_utility",
    "lipschitz_bounds",
    "mixture_utility",
    "weighted_sum_utility",
    "__version__",
]
