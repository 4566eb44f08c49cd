class ConfigurationError(ValueError):
    """Raised when sizes, indices or configs are inconsistent."""
