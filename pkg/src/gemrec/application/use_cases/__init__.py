"""Use cases - application-specific workflows."""
