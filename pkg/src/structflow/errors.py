"""Exception hierarchy. The CLI maps these onto exit codes."""


class StructFlowError(Exception):
    pass


class DataError(StructFlowError, ValueError):
    """Malformed or inconsistent input data (exit code 2)."""


class ConlluParseError(DataError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmbeddingError(DataError):
    pass


class ShapeError(DataError):
    pass


class NumericalError(StructFlowError, ArithmeticError):
    """Non-finite values or singular maps (exit code 3)."""


class CheckpointError(DataError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class ManifestError(CheckpointError):
    pass
