"""Exception hierarchy shared by every module.

The CLI maps each family onto a process exit code (see ``cli.EXIT_CODES``).
"""


class AleatoricError(Exception):
    """Base class for all package errors."""


class DimensionError(AleatoricError, ValueError):
    """Shapes of the operands do not agree."""


class DomainError(AleatoricError, ValueError):
    """An argument lies outside the operation's domain."""


class NumericalError(AleatoricError, FloatingPointError):
    """A non-finite value escaped a numeric operation."""


class StateError(AleatoricError, RuntimeError):
    """An object was used out of order, e.g. backward without forward."""


class ContractError(AleatoricError, RuntimeError):
    """Caller violated a usage contract (e.g. RNG passed to inference dropout)."""


class ConfigError(AleatoricError, ValueError):
    pass


class SchemaError(AleatoricError, ValueError):
    pass


class DataError(AleatoricError, ValueError):
    pass


class TrainingError(AleatoricError, RuntimeError):
    def __init__(self, message, epoch=None, batch=None):
        where = []
        if epoch is not None:
            where.append(f"epoch {epoch}")
        if batch is not None:
            where.append(f"batch {batch}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class EvaluationError(AleatoricError, RuntimeError):
    pass


class UndefinedMetricError(EvaluationError, ValueError):
    """Metric cannot be computed, e.g. AUC on single-class input."""
