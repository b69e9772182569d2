"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, data errors
(ParseError, FormatError, SplitError, DataError) -> 3, DivergenceError -> 4.
"""


class FscilError(Exception):
    """Base class for all package errors."""


class DimensionError(FscilError):
    """Operand shapes are incompatible."""


class DegenerateInputError(FscilError):
    """A row to be l2-normalized has (near-)zero norm."""


class LabelError(FscilError):
    """A class label is outside the valid range."""


class DataError(FscilError):
    """Dataset-level problem (missing file, bad content)."""


class ParseError(DataError):
    """A feature file row could not be parsed; carries the line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class FormatError(DataError):
    """A feature file violates the format contract (e.g. inconsistent dim)."""


class SplitError(DataError):
    """A session split cannot be built from the given examples/config."""


class ProtocolError(FscilError):
    """An operation was invoked out of protocol order or with stale state."""


class PrototypeError(FscilError):
    """Prototype computation failed (e.g. a class with zero examples)."""


class MetricError(FscilError):
    """Evaluation was asked for metrics over an empty set."""


class ConfigError(FscilError):
    """Invalid experiment configuration; carries the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DivergenceError(FscilError):
    """Training produced a non-finite loss; carries epoch and batch index."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch
