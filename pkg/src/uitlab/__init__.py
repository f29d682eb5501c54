"""Uniform-in-time error experiments for stochastic approximations.

Three settings are covered: slow-fast averaging, SDE discretisation
(ULA, UBU, unadjusted HMC) and mean-field particle systems, plus a
time-inhomogeneous negative control whose error does not vanish uniformly.
"""

__version__ = "0.1.0"

from uitlab.errors import (
    BudgetExceeded,
    ConfigError,
    FitFailure,
    InvalidArgument,
    NumericalBlowup,
    UitlabError,
)
from uitlab.metrics import ErrorCurve, RateFit

__all__ = [
    "BudgetExceeded",
    "ConfigError",
    "ErrorCurve",
    "FitFailure",
    "InvalidArgument",
    "NumericalBlowup",
    "RateFit",
    "UitlabError",
    "__version__",
]
