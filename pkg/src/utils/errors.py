class HedgeScopeError(Exception):
    exit_code: int = 1


class ConfigurationError(HedgeScopeError, ValueError):
    exit_code = 2


class DataError(HedgeScopeError):
    exit_code = 3


class SchemaError(DataError, ValueError):
    pass


class ExternalServiceError(HedgeScopeError):
    exit_code = 4


class InvariantViolation(HedgeScopeError):
    exit_code = 5


class StageError(HedgeScopeError):
    """Failure inside a named stage; keeps the exit code of its cause."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"Stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, 'exit_code', InvariantViolation.exit_code)
