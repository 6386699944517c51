"""Exception hierarchy shared by all kvsim modules."""


class KvsimError(Exception):
    """Base class for all errors raised by kvsim."""


class UsageError(KvsimError):
    """An API, config, or CLI surface was called with invalid arguments."""


class ConfigError(UsageError):
    """Scenario configuration failed validation.

    Carries the complete list of violations, not just the first one found.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DomainError(KvsimError):
    """Inputs left the mathematical domain of an operation (e.g. theta <= 0)."""


class DegeneracyError(DomainError):
    """The temperature field lost the positivity that keeps the heat
    sub-problem parabolic (frozen coefficient nonpositive, or an iterate
    dropped below the configured floor)."""


class NonConvergenceError(KvsimError):
    """An iterative process exhausted its iteration budget.

    ``report`` holds the linear-solver report or Picard trace of the
    failed solve, when available.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class CheckpointError(KvsimError):
    """A checkpoint file is unreadable, corrupt, or version-incompatible."""
