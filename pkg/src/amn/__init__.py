"""Extract norms from asymptotically multiplicative distances on vector spaces.

A distance ``d`` on a finite-dimensional space over R, C or H that is roughly
translation invariant and roughly multiplicative under scalars determines a
seminorm: the large-scale limit of ``d`` averaged over unit scalars. The
package fits the hypothesis constants from samples, estimates that limit,
detects the subspace on which ``d`` stays bounded, and checks the resulting
norm against the distance.
"""

from amn.asymptote import (
    ExtractionConfig,
    LimitEstimate,
    Mode,
    NormModel,
    Verdict,
    delta,
    delta0,
    extract_norm_model,
    geometric_schedule,
    quotient_hausdorff,
    quotient_norm,
    subadditive_limit,
)
from amn.field import Field, UnitQuadrature, unit_quadrature
from amn.hypotheses import HypothesisConstants, check_sum_condition, fit_asymptotic, fit_constants
from amn.space import DistanceSpace, SpecError, parse_spec

__version__ = "0.1.0"

__all__ = [
    "DistanceSpace",
    "ExtractionConfig",
    "Field",
    "HypothesisConstants",
    "LimitEstimate",
    "Mode",
    "NormModel",
    "SpecError",
    "UnitQuadrature",
    "Verdict",
    "check_sum_condition",
    "delta",
    "delta0",
    "extract_norm_model",
    "fit_asymptotic",
    "fit_constants",
    "geometric_schedule",
    "parse_spec",
    "quotient_hausdorff",
    "quotient_norm",
    "subadditive_limit",
    "unit_quadrature",
]
