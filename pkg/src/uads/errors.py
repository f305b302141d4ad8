"""Exception types shared across the toolkit."""


class UadsError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(UadsError):
    """Invalid configuration or command-line usage (exit code 1)."""


class DataError(UadsError):
    """Bad input data or inconsistent pipeline state (exit code 2)."""


class CacheFormatError(DataError):
    """Frame-matrix cache file is malformed or truncated."""
