"""Repository implementations."""

from gemrec.infrastructure.repositories.marketplace_repository import JsonlMarketplaceRepository
from gemrec.infrastructure.repositories.model_repository import FileModelRepository
from gemrec.infrastructure.repositories.report_repository import FileReportRepository

__all__ = [
    "JsonlMarketplaceRepository",
    "FileModelRepository",
    "FileReportRepository",
]
