"""Domain exceptions for the gemrec engine."""

from typing import Any


class GemRecError(Exception):
    """
    Base of every error the engine raises on purpose.

    `context` carries structured details for logs. The CLI shows `context["advice"]`
    to the user when present.
    """

    def __init__(self, message: str, **context: Any) -> None:
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={v!r}" for k, v in sorted(self.context.items()))
        return f"{self.message} ({details})"


class ConfigurationError(GemRecError):
    """Raised for unknown keys, out-of-range values or unreadable config files."""

    pass


class ValidationError(GemRecError):
    """Raised when a request, context or dataset breaks an input rule."""

    pass


class DegenerateCorpusError(GemRecError):
    """Raised when a quantizer level has fewer distinct points than centroids."""

    pass


class UniquenessViolationError(GemRecError):
    """Raised when two items share the same full semantic ID."""

    pass


class EmptyInventoryError(GemRecError):
    """Raised when an operation needs sponsored inventory and there is none."""

    pass


class NoCandidateError(GemRecError):
    """Raised when an auction is run over an empty candidate set."""

    pass


class MissingSemanticIdError(GemRecError):
    """Raised when an item has no semantic ID assigned."""

    pass


class PositionError(GemRecError):
    """Raised when a token context is not aligned with the requested slot."""

    pass


class NoAdAvailableError(GemRecError):
    """Raised when constrained AD decoding has no eligible sponsored item."""

    pass


class ArtifactError(GemRecError):
    """Raised when reading or writing a pipeline artifact fails."""

    pass


class AuditFailureError(GemRecError):
    """Raised when one or more mechanism audit checks fail."""

    pass
