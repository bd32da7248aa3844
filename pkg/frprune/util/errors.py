from typing import Optional, Sequence


class FrpruneError(Exception):
    """ Base class for all errors raised by this package """


class ShapeMismatchError(FrpruneError, ValueError):
    """ Raised when tensor shapes do not line up for a kernel or a layer """

    def __init__(self, what: str, expected: Sequence, actual: Sequence):
        self.what = what
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(f"{what}: expected {self.expected}, got {self.actual}")


class NonFiniteError(FrpruneError, ArithmeticError):
    """ Raised when a kernel produces NaN or Inf from finite input """


class MissingContextError(FrpruneError, RuntimeError):
    """ Raised when a backward kernel is called without its saved forward context """


class OptimizerStateError(FrpruneError, ValueError):
    """ Raised when a momentum buffer no longer matches its parameter (missed surgery) """


class ArchitectureError(FrpruneError, ValueError):
    """ Raised for unknown families, unrepresentable depths and malformed graphs """


class IneligibleChannelError(FrpruneError, ValueError):
    """ Raised when surgery is asked to remove a channel that is not prune-eligible """


class LayerAnnihilationError(FrpruneError, ValueError):
    """ Raised when a prune step would remove every channel of a layer """


class TraceMismatchError(FrpruneError, RuntimeError):
    """ Raised when an activation trace does not belong to the current model """


class LabelRangeError(FrpruneError, ValueError):
    """ Raised when a class label is outside [0, c) """


class EmptyClassError(FrpruneError, ValueError):
    """ Raised when a class has no samples where at least one is required """

    def __init__(self, classes: Sequence[int]):
        self.classes = list(classes)
        super().__init__(f"No samples for class(es) {self.classes}; drop these classes or re-sample "
                         f"the scoring subset so that every class is represented")


class ClassWeightError(FrpruneError, ValueError):
    """ Raised when class-wise accuracies cannot be turned into weights """


class SelectionError(FrpruneError, ValueError):
    """ Raised when the requested number of victims cannot be selected """


class EmptyDatasetError(FrpruneError, ValueError):
    """ Raised when an operation needs at least one sample """


class DatasetFormatError(FrpruneError, ValueError):
    """ Raised for bad magic numbers, truncated files and out-of-range labels """


class CheckpointError(FrpruneError, ValueError):
    """ Raised for unreadable, corrupt or incompatible checkpoint files """


class ConfigError(FrpruneError, ValueError):
    """ Raised for unknown keys and constraint violations in a run configuration """

    def __init__(self, message: str, key: Optional[str] = None, section: Optional[str] = None,
                 line: Optional[int] = None, path: Optional[str] = None):
        self.message = message
        self.key = key
        self.section = section
        self.line = line
        self.path = path
        location = []
        if path is not None:
            location.append(str(path))
        if line is not None:
            location.append(f"line {line}")
        if section is not None:
            location.append(f"[{section}]" + (f" {key}" if key is not None else ""))
        elif key is not None:
            location.append(key)
        prefix = ", ".join(location)
        super().__init__(f"{prefix}: {message}" if prefix else message)
