"""Exception hierarchy.

Every error carries the CLI exit code it maps to, so the command layer can
translate failures without a lookup table.
"""


class CellRamError(Exception):
    exit_code = 1


class ConfigError(CellRamError, ValueError):
    exit_code = 2


class ArgumentError(CellRamError, ValueError):
    exit_code = 2


class DataError(CellRamError, ValueError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(ParseError):
    pass


class DegenerateDatasetError(DataError):
    pass


class LabelConflictError(DataError):
    def __init__(self, point, labels):
        self.point = tuple(float(v) for v in point)
        self.labels = tuple(labels)
        super().__init__(
            f"point {self.point} appears with conflicting labels {self.labels}"
        )


class UnsupportedDimensionError(DataError):
    pass


class DataIntegrityError(DataError):
    pass


class NumericError(CellRamError, ArithmeticError):
    exit_code = 4


class DivergenceError(NumericError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")


class DegenerateDensityError(NumericError):
    pass
