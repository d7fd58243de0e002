"""Exception hierarchy shared by all modules.

Everything raised on bad inputs derives from ToolkitError so the CLI can
map it to the validation exit code; genuine runtime failures (OSError and
friends) stay outside the hierarchy.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for input and configuration errors."""


class NonNormalizedError(ToolkitError):
    """Probability vector does not sum to 1 within tolerance."""


class NegativeProbabilityError(ToolkitError):
    """Probability vector contains a negative entry."""


class MissingAnswersError(ToolkitError):
    """Annotation record does not carry the 10 required answers."""


class EmptyInputError(ToolkitError):
    """An aggregate was requested over an empty collection."""


class DuplicateModelError(ToolkitError):
    """The same model id appears twice in one prediction group."""


class MissingPredictionError(ToolkitError):
    """A question lacks the prediction required for the requested result."""


class TooFewPointsError(ToolkitError):
    """Fewer feature points than clusters requested."""


class DegenerateDataError(ToolkitError):
    """Fewer distinct feature points than clusters requested."""


class MalformedModelFileError(ToolkitError):
    """Cluster model file is structurally invalid."""


class VersionMismatchError(ToolkitError):
    """Cluster model file was written with an unsupported format version."""


class MalformedRecordError(ToolkitError):
    """A line in an input file failed validation (strict mode)."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


class VocabularyRequiredError(ToolkitError):
    """A distribution-mode prediction appeared but no vocabulary is loaded."""


class RoleUnresolvedError(ToolkitError):
    """The I/Q/QI role mapping is incomplete or ambiguous."""


class InvalidConfigError(ToolkitError):
    """Clustering configuration violates its constraints."""


class InvalidSpecError(ToolkitError):
    """Synthetic data spec violates its constraints."""


class InvalidKError(ToolkitError):
    """Requested unique-answer count is outside 1..10."""
