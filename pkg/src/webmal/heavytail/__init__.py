"""Heavy-tailed distribution fitting and model selection."""

from .families import (FAMILIES, FAMILY_ORDER, Exponential, Lognormal,
                       LognormalPositive, PowerLaw, StretchedExponential,
                       TailDistribution, TruncPowerLaw, make_distribution,
                       upper_gamma)
from .fitting import (CandidateSet, ComparisonResult, FitResult, compare,
                      estimate_xmin, ks_distance, mle_fit, select_candidates)

__all__ = [
    "FAMILIES", "FAMILY_ORDER", "Exponential", "Lognormal", "LognormalPositive",
    "PowerLaw", "StretchedExponential", "TailDistribution", "TruncPowerLaw",
    "make_distribution", "upper_gamma", "CandidateSet", "ComparisonResult",
    "FitResult", "compare", "estimate_xmin", "ks_distance", "mle_fit",
    "select_candidates",
]
