"""Exception taxonomy shared across the package.

Every failure the CLI reports maps to one of these classes; the class name is
the machine-parsable error code printed on exit.
"""


class PromptPoseError(Exception):
    """Base class for all package errors."""


class ShapeError(PromptPoseError):
    """Tensor dimensions incompatible with the requested operation."""


class ContractError(PromptPoseError):
    """An operation was called outside its documented contract."""


class ConfigError(PromptPoseError):
    """Invalid or incompatible configuration."""


class DomainError(PromptPoseError):
    """A value lies outside its documented domain (e.g. coordinates not in [0,1])."""


class NumericError(PromptPoseError):
    """Non-finite values where finite ones are required."""


class TokenizationError(PromptPoseError):
    """Input text contains symbols the closed vocabulary cannot cover."""


class ParseError(PromptPoseError):
    """Malformed coordinate text; carries the offending span."""

    def __init__(self, message: str, span: str = ""):
        super().__init__(message)
        self.span = span


class GenerationOverrun(PromptPoseError):
    """Greedy decoding hit the length cap without producing a position."""


class UndefinedMetricError(PromptPoseError):
    """A metric was requested on an empty or degenerate evaluation set."""


class CheckpointError(PromptPoseError):
    """Checkpoint files are corrupt, truncated, or incompatible."""


class DatasetError(PromptPoseError):
    """A dataset file is malformed or references a missing image."""


class TrainingDiverged(PromptPoseError):
    """Training produced a non-finite loss; carries offending sample ids."""

    def __init__(self, message: str, sample_ids=()):
        super().__init__(message)
        self.sample_ids = list(sample_ids)


class UsageError(PromptPoseError):
    """Command-line arguments are missing or inconsistent."""
