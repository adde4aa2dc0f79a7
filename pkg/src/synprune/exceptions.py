"""
Custom exceptions for synprune
"""

from typing import Iterable, Optional, Sequence


class SynPruneException(Exception):
    """Base exception"""
    pass


class InvalidParameterError(SynPruneException):
    """Rejected argument or violated precondition"""
    pass


class ShapeMismatchError(InvalidParameterError):
    """Batch / label / architecture shapes disagree"""
    pass


class ArchitectureMismatchError(InvalidParameterError):
    """Two model states do not share an architecture"""
    pass


class DegeneratePairError(InvalidParameterError):
    """Two endpoints are too close to span a direction"""
    pass


class ConfigError(SynPruneException):
    """Configuration validation error"""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class NumericFailureError(SynPruneException):
    """NaN or Inf encountered"""

    def __init__(
        self,
        message: str,
        layer_index: Optional[int] = None,
        step: Optional[int] = None,
        iteration: Optional[int] = None,
        seed: Optional[int] = None,
        branch: Optional[str] = None,
    ):
        self.layer_index = layer_index
        self.step = step
        self.iteration = iteration
        self.seed = seed
        self.branch = branch
        self.message = message
        context = {
            "layer": layer_index,
            "step": step,
            "iteration": iteration,
            "seed": seed,
            "branch": branch,
        }
        details = ", ".join(f"{k}={v}" for k, v in context.items() if v is not None)
        super().__init__(f"{message} ({details})" if details else message)

    def with_context(self, **context) -> "NumericFailureError":
        """Return a copy enriched with outer-loop context (keeps existing values)"""
        merged = {
            "layer_index": self.layer_index,
            "step": self.step,
            "iteration": self.iteration,
            "seed": self.seed,
            "branch": self.branch,
        }
        for key, value in context.items():
            if merged.get(key) is None:
                merged[key] = value
        return NumericFailureError(self.message, **merged)


class UsageError(SynPruneException):
    """API used out of order"""
    pass


class DatasetFormatError(SynPruneException):
    """Malformed IDX file or dataset container"""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{message} [field: {field}]"
        super().__init__(message)


class MissingArtifactError(SynPruneException):
    """A required on-disk artifact does not exist"""
    pass


class MissingCheckpointError(MissingArtifactError):
    """Requested checkpoint not present in a run record"""

    def __init__(self, message: str, available: Iterable[float] = ()):
        self.available: Sequence[float] = tuple(available)
        listing = ", ".join(f"{value:.4f}" for value in self.available) or "none"
        super().__init__(f"{message}; available: {listing}")
