"""Presentation layer - CLI interface."""
