"""Exception types shared across modules."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class UsageError(RuntimeError):
    """An API called outside its contract (e.g. stepping a finished episode)."""
