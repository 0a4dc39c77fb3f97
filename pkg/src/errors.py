# ----------------------------------------------------------------
# RapidStab 1.0 - Error Types (GPLv3)
# Copyright (C) 2025 The RapidStab Authors
# License: GNU GPL v3+ <https://www.gnu.org/licenses/gpl-3.0.txt>
# This is free software with NO WARRANTY.
# ----------------------------------------------------------------

from typing import Optional


class RapidStabError(Exception):
    """Base class for every failure the command line maps to an exit code"""

    exit_code: int = 1

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message


class UsageError(RapidStabError):
    """Bad configuration, missing input file or malformed JSON"""

    exit_code = 1


class HypothesisViolation(RapidStabError):
    """Some moment coefficient k³|m_k| fell under the tolerance"""

    exit_code = 2

    def __init__(self, message: str, worst_k: Optional[int] = None, c_lower: Optional[float] = None) -> None:
        super().__init__(message)
        self.worst_k = worst_k
        self.c_lower = c_lower


class NearSingularBasis(RapidStabError):
    exit_code = 3

    def __init__(self, message: str, sigma_min: float, sigma_max: float) -> None:
        super().__init__(message)
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max


class QuadratureUnderresolution(RapidStabError):
    """Doubling the panel count moved a projected coefficient too much"""

    exit_code = 4

    def __init__(self, message: str, relative_change: float) -> None:
        super().__init__(message)
        self.relative_change = relative_change


class InstabilityDetected(RapidStabError):
    """The closed-loop norm crossed the instability guard"""

    exit_code = 5

    def __init__(self, message: str, time: float, growth: float) -> None:
        super().__init__(message)
        self.time = time
        self.growth = growth


class AssumptionViolation(RapidStabError):
    """Finite-dimensional input breaks a standing assumption (simple spectrum, invertible shift)"""

    exit_code = 6


class NumericalDegeneracy(RapidStabError):
    exit_code = 6


class ControllabilityViolation(RapidStabError):
    """A coordinate of B in the eigenbasis vanished"""

    exit_code = 6


class FactorizationFailure(RapidStabError):
    """Dense LU broke down (singular transform or dt on the integrator's pole)"""

    exit_code = 7
