"""Exception hierarchy.

Each class carries the CLI exit code it maps to: 2 for domain failures
(infeasible designs, schedules or optimizations), 3 for numerical failures.
"""


class HZDError(Exception):
    exit_code = 3


class InvalidStateError(HZDError, ValueError):
    """Non-finite or malformed state vector."""


class NumericalSingularityError(HZDError):
    """A matrix that must be inverted is singular or badly conditioned."""


class DegenerateImpactError(NumericalSingularityError):
    pass


class InvalidGaitError(HZDError):
    """The gait violates a structural requirement (e.g. kappa1 changes sign)."""


class GaitDesignError(HZDError):
    exit_code = 2

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class StepFailure(HZDError):
    """Phase velocity or zeta reached zero before the end of the step."""

    def __init__(self, message, alpha=None):
        super().__init__(message)
        self.alpha = alpha


class DivergenceError(HZDError):
    pass


class NoLimitCycleError(HZDError):
    pass


class InfeasibleScheduleError(HZDError):
    exit_code = 2


class OptimizationInfeasible(HZDError):
    exit_code = 2

    def __init__(self, message, binding=None):
        super().__init__(message)
        self.binding = binding


class FitQualityError(HZDError):
    pass


class ConfigError(HZDError, ValueError):
    exit_code = 64
