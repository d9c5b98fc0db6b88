"""Exception taxonomy shared across the package.

CLI exit-code mapping: UsageError -> 1, DataError subtree -> 2,
NumericError subtree -> 3.
"""


class UsageError(Exception):
    """Bad command line or config usage."""


class DataError(Exception):
    """Input data violates a contract (bad file, bad signal, empty dataset)."""


class SignalError(DataError):
    """A waveform fails a preprocessing precondition (non-finite, flat, ...)."""


class FormatError(DataError):
    """A serialized container (PAIRS1 / PFE1) is corrupt or mismatched."""


class GenerationError(DataError):
    """Synthetic dataset generation rejected too many candidate segments."""


class ContractError(ValueError):
    """Programming contract violation: shapes, ranges, empty batches."""


class ConfigError(ValueError):
    """A configuration value cannot be realized (e.g. filter design)."""


class NumericError(Exception):
    """Numeric failure during training or metric evaluation."""


class TrainingError(NumericError):
    """Loss became non-finite; carries the failing step index."""

    def __init__(self, step: int, message: str = "") -> None:
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class MetricError(NumericError):
    """A metric is undefined for the given inputs (e.g. single-class AUROC)."""
