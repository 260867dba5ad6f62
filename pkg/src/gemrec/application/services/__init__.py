"""Application services - semantic index, marketplace, scorer and decoder."""
