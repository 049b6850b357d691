"""Core signal-domain types and amplitude-domain conversions.

Arrays follow two layout conventions throughout the package:

  channel data   (Nt, Ne)   time sample x receive element
  images         (Nz, Nx)   axial (depth) x lateral

All internal math is float64; file I/O casts to float32 at the boundary.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import ConfigError, DataError

__all__ = [
    "ProbeGeometry",
    "ImagingGrid",
    "ChannelData",
    "RfImage",
    "BModeImage",
    "envelope_detect",
    "log_compress",
    "normalize_unit",
]


def _as_float_array(name, values, ndim):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def _check_uniform_increasing(name, axis):
    if axis.size >= 2:
        steps = np.diff(axis)
        if np.any(steps <= 0):
            raise DataError(f"{name} coordinates must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise DataError(f"{name} coordinates must be uniformly spaced")


@dataclass(frozen=True)
class ProbeGeometry:
    """Linear array description: element x-positions plus acquisition scalars."""

    element_positions: np.ndarray  # (Ne,) lateral positions in meters
    center_frequency: float
    sampling_frequency: float
    sound_speed: float = 1540.0

    def __post_init__(self):
        pos = _as_float_array("element_positions", self.element_positions, 1)
        if pos.size < 2:
            raise DataError("need at least two elements")
        if np.any(np.diff(pos) <= 0):
            raise DataError("element positions must be strictly increasing")
        object.__setattr__(self, "element_positions", pos)
        for name in ("center_frequency", "sampling_frequency", "sound_speed"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0:
                raise ConfigError(f"{name} must be positive and finite, got {v}")
            object.__setattr__(self, name, v)

    @property
    def element_count(self):
        return self.element_positions.size


@dataclass(frozen=True)
class ImagingGrid:
    """Rectilinear pixel grid: lateral coordinates x, axial coordinates z."""

    x: np.ndarray  # (Nx,) meters
    z: np.ndarray  # (Nz,) meters

    def __post_init__(self):
        x = _as_float_array("x", self.x, 1)
        z = _as_float_array("z", self.z, 1)
        if x.size < 1 or z.size < 1:
            raise DataError("grid axes must be non-empty")
        _check_uniform_increasing("x", x)
        _check_uniform_increasing("z", z)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @classmethod
    def regular(cls, x0, x1, nx, z0, z1, nz):
        return cls(np.linspace(x0, x1, nx), np.linspace(z0, z1, nz))

    @property
    def nx(self):
        return self.x.size

    @property
    def nz(self):
        return self.z.size

    @property
    def shape(self):
        return (self.z.size, self.x.size)

    @property
    def dx(self):
        return float(self.x[1] - self.x[0]) if self.x.size >= 2 else 0.0

    @property
    def dz(self):
        return float(self.z[1] - self.z[0]) if self.z.size >= 2 else 0.0


@dataclass(frozen=True)
class ChannelData:
    """Received echoes for one plane-wave transmit."""

    samples: np.ndarray  # (Nt, Ne)
    geometry: ProbeGeometry
    transmit_angle: float = 0.0  # radians, 0 = straight down
    start_time: float = 0.0  # acquisition time of samples[0], seconds

    def __post_init__(self):
        s = _as_float_array("samples", self.samples, 2)
        if s.shape[0] < 1:
            raise DataError("need at least one time sample")
        if s.shape[1] != self.geometry.element_count:
            raise DataError(
                f"samples have {s.shape[1]} channels, probe has "
                f"{self.geometry.element_count} elements")
        object.__setattr__(self, "samples", s)
        ang = float(self.transmit_angle)
        t0 = float(self.start_time)
        if not np.isfinite(ang) or not np.isfinite(t0):
            raise DataError("transmit_angle and start_time must be finite")
        object.__setattr__(self, "transmit_angle", ang)
        object.__setattr__(self, "start_time", t0)

    @property
    def sample_count(self):
        return self.samples.shape[0]


@dataclass(frozen=True)
class RfImage:
    """Beamformed image on a grid; values may be signed RF or non-negative."""

    values: np.ndarray  # (Nz, Nx)
    grid: ImagingGrid

    def __post_init__(self):
        v = _as_float_array("values", self.values, 2)
        if v.shape != self.grid.shape:
            raise DataError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class BModeImage:
    """Log-compressed display image; values in [-dynamic_range, 0] dB."""

    values_db: np.ndarray  # (Nz, Nx)
    grid: ImagingGrid
    dynamic_range: float = 60.0

    def __post_init__(self):
        dr = float(self.dynamic_range)
        if not np.isfinite(dr) or dr <= 0:
            raise ConfigError(f"dynamic_range must be positive, got {dr}")
        object.__setattr__(self, "dynamic_range", dr)
        v = _as_float_array("values_db", self.values_db, 2)
        if v.shape != self.grid.shape:
            raise DataError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if v.size and (v.max() > 0.0 or v.min() < -dr):
            raise DataError("values_db must lie in [-dynamic_range, 0]")
        object.__setattr__(self, "values_db", v)


def envelope_detect(image):
    """Magnitude of the per-column analytic signal of an RF image.

    Each axial column is extended to its analytic signal by zeroing the
    negative-frequency half of its spectrum (doubling the positive half,
    leaving DC and Nyquist at unit weight) and the envelope is the complex
    magnitude.  Columns need at least 4 samples for the spectral split to
    be meaningful.
    """
    if image.values.shape[0] < 4:
        raise DataError("envelope detection needs at least 4 axial samples")
    analytic = scipy.signal.hilbert(image.values, axis=0)
    return RfImage(np.abs(analytic), image.grid)


def log_compress(envelope, dynamic_range=60.0):
    """Map a non-negative envelope to dB relative to its maximum, clipped.

    Output is 20*log10(v / max(v)) clipped to [-dynamic_range, 0].  An
    identically zero envelope maps to a uniform -dynamic_range image.
    """
    dr = float(dynamic_range)
    if not np.isfinite(dr) or dr <= 0:
        raise ConfigError(f"dynamic_range must be positive, got {dynamic_range}")
    v = envelope.values
    if v.size and v.min() < 0:
        raise DataError("envelope values must be non-negative")
    peak = v.max() if v.size else 0.0
    if peak == 0.0:
        db = np.full(v.shape, -dr)
    else:
        with np.errstate(divide="ignore"):
            db = 20.0 * np.log10(v / peak)
        db = np.clip(db, -dr, 0.0)
    return BModeImage(db, envelope.grid, dynamic_range=dr)


def normalize_unit(image):
    """Scale so that max |value| is 1; an all-zero image is returned unchanged."""
    peak = np.abs(image.values).max() if image.values.size else 0.0
    if peak == 0.0:
        return image
    return RfImage(image.values / peak, image.grid)
