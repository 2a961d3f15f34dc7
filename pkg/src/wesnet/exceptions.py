"""Exception hierarchy shared across the package."""


class WesnetError(Exception):
    """Base class for all package errors."""


class ConfigError(WesnetError, ValueError):
    """Invalid configuration value or file."""


class ContractError(WesnetError, ValueError):
    """An argument violates a function's shape or value contract."""


class InputDomainError(ContractError):
    """Input outside the mathematical domain (e.g. non-finite entries)."""


class CapacityError(WesnetError):
    """Problem too large for an exhaustive method."""


class NumericalError(WesnetError, ArithmeticError):
    """A numerical routine failed to converge or produced non-finite values."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularMatrixError(NumericalError):
    """A Gram matrix that must be positive definite is (numerically) singular."""


class TrainingDivergedError(NumericalError):
    """Training loss became non-finite.

    ``last_good`` holds the parameters from the last finite iteration and
    ``checkpoint_path`` is filled in by the harness when it persists them.
    """

    def __init__(self, message, last_good=None, iteration=None):
        super().__init__(message)
        self.last_good = last_good
        self.iteration = iteration
        self.checkpoint_path = None


class CheckpointError(WesnetError, IOError):
    """Checkpoint could not be read."""


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class OutputExistsError(WesnetError, FileExistsError):
    """Refusing to replace an existing result file without an explicit overwrite."""
