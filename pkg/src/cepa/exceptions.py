"""Exception taxonomy shared by the library and the CLI exit codes."""


class CepaError(Exception):
    """Base class for all errors raised by this package."""


class InputError(CepaError):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class NumericalError(CepaError):
    """Numerical failure: singular covariance, degenerate truncation,
    inconsistent selection replay (CLI exit code 3)."""


class ConfigError(CepaError):
    """Invalid or incompatible configuration (CLI exit code 4)."""
