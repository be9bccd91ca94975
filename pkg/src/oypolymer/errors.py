"""Exception types shared across the package."""


class GridAlignmentError(ValueError):
    """A requested time does not sit on the grid, or points are mis-ordered."""


class MemoryBudgetError(RuntimeError):
    """An environment or slice allocation would exceed the configured budget."""


class TruncationError(RuntimeError):
    """A truncated integral's tail mass is not negligible at the cutoff."""


class ConfigError(ValueError):
    """An experiment config file is malformed; the message names the field."""
