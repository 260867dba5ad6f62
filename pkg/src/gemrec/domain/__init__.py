"""Domain layer - core business logic and entities."""

from gemrec.domain.exceptions import (
    ArtifactError,
    AuditFailureError,
    ConfigurationError,
    DegenerateCorpusError,
    EmptyInventoryError,
    GemRecError,
    MissingSemanticIdError,
    NoAdAvailableError,
    NoCandidateError,
    PositionError,
    UniquenessViolationError,
    ValidationError,
)
from gemrec.domain.models import (
    AuditCheck,
    AuditReport,
    DecodeConfig,
    DecodeResult,
    FlagMode,
    Inventory,
    Mode,
    SemanticId,
    Trajectory,
    Vocabulary,
)

__all__ = [
    # Exceptions
    "ArtifactError",
    "AuditFailureError",
    "ConfigurationError",
    "DegenerateCorpusError",
    "EmptyInventoryError",
    "GemRecError",
    "MissingSemanticIdError",
    "NoAdAvailableError",
    "NoCandidateError",
    "PositionError",
    "UniquenessViolationError",
    "ValidationError",
    # Models
    "AuditCheck",
    "AuditReport",
    "DecodeConfig",
    "DecodeResult",
    "FlagMode",
    "Inventory",
    "Mode",
    "SemanticId",
    "Trajectory",
    "Vocabulary",
]
