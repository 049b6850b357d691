"""PICMUS HDF5 recordings -> pwvar channel bundles.

This package is deliberately independent of the imaging pipeline: the
contract between the two is the byte format of the channel bundle, not a
shared import.
"""

from .errors import ConfigError, DataError, IngestError
from .reader import PicmusRecord, read_picmus

__all__ = ["ConfigError", "DataError", "IngestError", "PicmusRecord",
           "read_picmus"]
__version__ = "0.1.0"
