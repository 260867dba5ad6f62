"""
gemrec.

Bid-modulated generative recommendation over hierarchical semantic IDs:
synthetic marketplace, n-gram scorer, modulated decoder and evaluation harness.
"""

__version__ = "0.1.0"

from gemrec.domain.models import DecodeConfig, FlagMode, Mode, SemanticId

__all__ = ["DecodeConfig", "FlagMode", "Mode", "SemanticId", "__version__"]
