"""Plane-wave ultrasound reconstruction with diffusion-sample despeckling.

The package covers the full chain: simulating single plane-wave channel data
over a speckle phantom, delay-and-sum and eigenspace minimum-variance
beamforming, drawing denoising-diffusion samples conditioned on the
beamformed image, and reducing the sample set to variance / median images
whose pixel statistics reveal echogenicity instead of speckle.
"""

from .core import (
    BModeImage,
    ChannelData,
    ImagingGrid,
    ProbeGeometry,
    RfImage,
    envelope_detect,
    log_compress,
    normalize_unit,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateInputError,
    DegenerateRegionError,
    DenoiserError,
    NoPeakError,
    NumericsError,
    PwvarError,
)

__version__ = "0.1.0"
