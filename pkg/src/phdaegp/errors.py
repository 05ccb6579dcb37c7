"""Exception types shared across the package."""


class ContractError(ValueError):
    """An argument violates an operation's preconditions."""


class NonPSDKernelError(RuntimeError):
    """Kernel system could not be factorized even at the maximum jitter."""


class OptimizationDiverged(RuntimeError):
    """Hyperparameter optimization produced repeated non-finite values."""


class NotIdentifiableError(ValueError):
    """``J - R`` is singular, so the effort function cannot be recovered."""


class DataFormatError(ValueError):
    """Malformed trajectory file."""
