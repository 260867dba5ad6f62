"""Infrastructure layer - configuration, logging and artifact storage."""
