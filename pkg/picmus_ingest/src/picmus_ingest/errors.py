class IngestError(Exception):
    """Base class for converter failures."""


class ConfigError(IngestError):
    """Bad arguments or selections (exit code 2)."""


class DataError(IngestError):
    """The input file is missing pieces or malformed (exit code 3)."""
