"""Application layer initialization."""

from gemrec.application.container import Container

__all__ = ["Container"]
