"""Exception types shared across the package.

Plain ``ValueError`` is raised for ordinary domain errors (bad argument
values, precondition violations); the classes here mark failures a caller
may want to handle separately.
"""


class ConfigurationError(ValueError):
    """Bad configuration: unknown policy token, missing column, invalid flag."""


class InsufficientDataError(ValueError):
    """Not enough data points to perform the requested computation."""


class NoConvergenceError(RuntimeError):
    """A linear solve or iteration could not reach the required tolerance."""
