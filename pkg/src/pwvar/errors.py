"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: configuration problems
exit 2, data problems (including numerical degeneracies induced by the
data) exit 3, external denoiser tool failures exit 4.
"""


class PwvarError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(PwvarError):
    """Invalid parameter value, config file, or option combination."""


class DataError(PwvarError):
    """Malformed, inconsistent, or non-finite input data."""


class DegenerateInputError(DataError):
    """Input is structurally valid but carries no usable signal."""


class NumericsError(PwvarError):
    """A numerical routine failed or produced non-finite values."""


class NoPeakError(PwvarError):
    """No usable peak for a width measurement."""


class DegenerateRegionError(PwvarError):
    """A statistics region is constant or otherwise unusable."""


class DenoiserError(PwvarError):
    """The external denoiser tool failed or answered with garbage."""
