"""Exception hierarchy shared by every module."""


class UitlabError(Exception):
    """Base class for all library errors."""


class InvalidArgument(UitlabError, ValueError):
    pass


class NumericalBlowup(UitlabError, FloatingPointError):
    """A trajectory produced a non-finite state.

    ``step`` is the time index of the first offending step and ``trajectory``
    the replica index when known.
    """

    def __init__(self, message, step=None, trajectory=None):
        super().__init__(message)
        self.step = step
        self.trajectory = trajectory


class FitFailure(UitlabError):
    pass


class BudgetExceeded(UitlabError):
    pass


class ConfigError(UitlabError):
    """Invalid experiment configuration; ``violations`` lists every problem found."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
