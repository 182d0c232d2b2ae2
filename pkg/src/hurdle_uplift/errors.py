"""Exception types shared across the package; the CLI maps them to exit codes."""


class ConfigError(ValueError):
    """Invalid configuration or incompatible command-line options."""


class DataError(ValueError):
    """Input data that violates a record invariant or the file schema."""
