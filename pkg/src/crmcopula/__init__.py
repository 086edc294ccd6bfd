"""Copula-based dependent collective risk models."""

from .corrmat import CorrStructure, Structure
from .copula import CopulaFamily
from .margins import GammaSeverity, Poisson, ZeroTruncatedPoisson, hurdle_from_base
from .model import CRMParams, PolicyRecord, moments, observed_logdensity

__all__ = [
    "CRMParams",
    "CopulaFamily",
    "CorrStructure",
    "GammaSeverity",
    "Poisson",
    "PolicyRecord",
    "Structure",
    "ZeroTruncatedPoisson",
    "hurdle_from_base",
    "moments",
    "observed_logdensity",
]

__version__ = "0.1.0"
