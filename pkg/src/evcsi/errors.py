"""Exception types shared across the package."""


class EvcsiError(Exception):
    """Base class for all package errors."""


class ConfigurationError(EvcsiError):
    """A config object or config file is invalid."""


class ContractError(EvcsiError):
    """A caller violated a documented precondition."""


class DimensionMismatchError(ContractError):
    """Data dimensions disagree with the configuration."""


class DegenerateInputError(EvcsiError):
    """Input is structurally unusable (all-zero matrix, zero-norm vector)."""


class ConvergenceError(EvcsiError):
    """An iterative solve did not reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class NumericError(EvcsiError):
    """A NaN or Inf appeared where only finite values are allowed."""


class TrainingError(EvcsiError):
    """Training aborted; carries the epoch where it happened."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class ProtocolError(EvcsiError):
    """A serialized artifact does not follow its declared format."""
