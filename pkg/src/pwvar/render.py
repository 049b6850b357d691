"""Binary PGM output for display images.

Pixel mapping is fixed: a dB value in [-dynamic_range, 0] becomes
round((db + dr) / dr * 255) in an 8-bit P5 file, rows in axial order.
"""

from pathlib import Path

import numpy as np

from .core import RfImage, envelope_detect, log_compress

__all__ = ["to_pgm_bytes", "write_pgm", "envelope_db", "direct_db"]


def to_pgm_bytes(bmode):
    db = bmode.values_db
    dr = bmode.dynamic_range
    nz, nx = db.shape
    pixels = np.rint((db + dr) / dr * 255.0).astype(np.uint8)
    header = f"P5\n{nx} {nz}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def write_pgm(path, bmode):
    Path(path).write_bytes(to_pgm_bytes(bmode))


def envelope_db(image, dynamic_range=60.0):
    """RF image -> envelope -> log compression."""
    return log_compress(envelope_detect(image), dynamic_range)


def direct_db(image, dynamic_range=60.0):
    """Magnitude map (variance, envelope) -> log compression, no detection."""
    return log_compress(RfImage(np.abs(image.values), image.grid),
                        dynamic_range)
