class DomainError(ValueError):
    """Input violates a mathematical or data precondition."""


class ConfigurationError(ValueError):
    """Invalid simulation or experiment configuration."""
