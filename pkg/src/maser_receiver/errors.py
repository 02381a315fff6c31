"""Exception types shared across the package."""


class ReceiverError(Exception):
    """Base class for all errors raised by maser_receiver."""


class DomainError(ReceiverError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(ReceiverError, ValueError):
    """A configuration violates one or more invariants.

    ``violations`` holds every ``(field_path, reason)`` pair found, not just
    the first one.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = [f"{path}: {reason}" for path, reason in self.violations]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


class StepSizeError(ConfigError):
    """The integration step does not resolve the fastest scale of the model."""

    def __init__(self, path, reason):
        super().__init__([(path, reason)])


class NumericalBlowupError(ReceiverError, ArithmeticError):
    def __init__(self, message, last_good_time):
        self.last_good_time = last_good_time
        super().__init__(f"{message} (last good time {last_good_time:.6g} s)")


class FitError(ReceiverError, RuntimeError):
    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual norm {residual:.4g})"
        super().__init__(message)


class TruncationError(ReceiverError, RuntimeError):
    """Fock-space cutoff too small for the evolved state."""

    def __init__(self, message, dim_fock, tail):
        self.dim_fock = dim_fock
        self.tail = tail
        super().__init__(message)


class ResourceError(ReceiverError, MemoryError):
    pass


class ScenarioError(ReceiverError, RuntimeError):
    pass
