"""Numerical phantoms, multiplicative speckle, and plane-wave echo simulation.

The tissue model is multiplicative: reflectivity o = m * p where p >= 0 is
the echogenicity map and m is an i.i.d. standard normal speckle field.  A
diffusion "sample" of the same scene re-noises the echogenicity-weighted
field: o_c = m * p + sqrt(p) * g_c, so the variance of o_c across samples
at a pixel equals p.

Echo simulation is single plane-wave: transmit delay (z cos a + x sin a)/c,
receive delay hypot(x - xe, z)/c, every scatterer adds
amplitude * pulse(t - tau) on each channel.  No directivity, attenuation,
or spreading loss.  Accumulation order is fixed (scatterers in cloud order,
elements sequentially), so outputs are bit-stable run to run.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core import ChannelData, ImagingGrid, RfImage
from .errors import ConfigError, DataError
from .streams import stream

__all__ = [
    "Circle",
    "Rect",
    "Phantom",
    "SpeckleField",
    "TissueReflectivity",
    "ScattererCloud",
    "GaussianPulse",
    "make_phantom",
    "draw_reflectivity",
    "cloud_from_reflectivity",
    "simulate_channel_data",
    "empirical_sample",
]


@dataclass(frozen=True)
class Circle:
    x: float
    z: float
    radius: float
    level: float
    label: str | None = None

    def __post_init__(self):
        if not (self.radius > 0):
            raise ConfigError(f"circle radius must be positive, got {self.radius}")
        if not (np.isfinite(self.level) and self.level >= 0):
            raise ConfigError(f"echogenicity level must be >= 0, got {self.level}")

    def bounds(self):
        return (self.x - self.radius, self.x + self.radius,
                self.z - self.radius, self.z + self.radius)

    def mask(self, xx, zz):
        return (xx - self.x) ** 2 + (zz - self.z) ** 2 <= self.radius ** 2


@dataclass(frozen=True)
class Rect:
    x0: float
    x1: float
    z0: float
    z1: float
    level: float
    label: str | None = None

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.z0 < self.z1):
            raise ConfigError("rectangle needs x0 < x1 and z0 < z1")
        if not (np.isfinite(self.level) and self.level >= 0):
            raise ConfigError(f"echogenicity level must be >= 0, got {self.level}")

    def bounds(self):
        return (self.x0, self.x1, self.z0, self.z1)

    def mask(self, xx, zz):
        return (xx >= self.x0) & (xx <= self.x1) & (zz >= self.z0) & (zz <= self.z1)


@dataclass(frozen=True)
class Phantom:
    """Echogenicity map plus integer region labels on a grid."""

    echo_map: np.ndarray  # (Nz, Nx), >= 0
    region_labels: np.ndarray  # (Nz, Nx) int
    regions: dict  # name -> label id
    grid: ImagingGrid

    def __post_init__(self):
        p = np.asarray(self.echo_map, dtype=np.float64)
        labels = np.asarray(self.region_labels)
        if p.shape != self.grid.shape or labels.shape != self.grid.shape:
            raise DataError("echo map / labels must match the grid shape")
        if not np.all(np.isfinite(p)) or p.min() < 0:
            raise DataError("echogenicity must be finite and >= 0")
        if not np.issubdtype(labels.dtype, np.integer):
            raise DataError("region labels must be integers")
        object.__setattr__(self, "echo_map", p)
        object.__setattr__(self, "region_labels", labels.astype(np.int64))


@dataclass(frozen=True)
class SpeckleField:
    """One realization of the i.i.d. standard-normal speckle field m."""

    values: np.ndarray  # (Nz, Nx)
    seed: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or not np.all(np.isfinite(v)):
            raise DataError("speckle field must be a finite 2-D array")
        object.__setattr__(self, "values", v)

    @classmethod
    def draw(cls, grid, seed):
        values = stream(seed, "speckle").standard_normal(grid.shape)
        return cls(values, int(seed))


@dataclass(frozen=True)
class TissueReflectivity:
    """Speckled reflectivity o = m * p."""

    values: np.ndarray  # (Nz, Nx)
    grid: ImagingGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape or not np.all(np.isfinite(v)):
            raise DataError("reflectivity must be finite and match the grid")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ScattererCloud:
    """Point scatterers: lateral/axial positions and signed amplitudes."""

    x: np.ndarray
    z: np.ndarray
    amplitude: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=np.float64))
        z = np.atleast_1d(np.asarray(self.z, dtype=np.float64))
        a = np.atleast_1d(np.asarray(self.amplitude, dtype=np.float64))
        if not (x.shape == z.shape == a.shape) or x.ndim != 1:
            raise DataError("cloud arrays must be 1-D and the same length")
        for name, arr in (("x", x), ("z", z), ("amplitude", a)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"cloud {name} contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "amplitude", a)

    def __len__(self):
        return self.x.size

    def concat(self, other):
        return ScattererCloud(
            np.concatenate([self.x, other.x]),
            np.concatenate([self.z, other.z]),
            np.concatenate([self.amplitude, other.amplitude]),
        )


@dataclass(frozen=True)
class GaussianPulse:
    """Gaussian-windowed cosine burst; bandwidth is the -6 dB fractional width."""

    center_frequency: float
    fractional_bandwidth: float = 0.6

    def __post_init__(self):
        if not (self.center_frequency > 0):
            raise ConfigError("pulse center frequency must be positive")
        if not (0 < self.fractional_bandwidth < 2):
            raise ConfigError("fractional bandwidth must be in (0, 2)")

    @property
    def sigma(self):
        bw = self.fractional_bandwidth * self.center_frequency
        return math.sqrt(2.0 * math.log(2.0)) / (math.pi * bw)

    @property
    def support(self):
        # envelope below ~1e-9 of peak outside +-6.5 sigma; treated as zero
        return 6.5 * self.sigma

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.exp(-0.5 * (t / self.sigma) ** 2) * np.cos(
            2.0 * np.pi * self.center_frequency * t)


def make_phantom(grid, primitives, background=1.0):
    """Paint primitives onto a grid; later primitives overwrite earlier ones.

    Every primitive must lie fully inside the grid's bounding box.  Each one
    gets label id 1 + its position in the list; unpainted pixels keep the
    background level and label 0.
    """
    if not (np.isfinite(background) and background >= 0):
        raise ConfigError(f"background level must be >= 0, got {background}")
    xx, zz = np.meshgrid(grid.x, grid.z)  # (Nz, Nx)
    echo = np.full(grid.shape, float(background))
    labels = np.zeros(grid.shape, dtype=np.int64)
    regions = {"background": 0}
    for index, prim in enumerate(primitives, start=1):
        x0, x1, z0, z1 = prim.bounds()
        if x0 < grid.x[0] or x1 > grid.x[-1] or z0 < grid.z[0] or z1 > grid.z[-1]:
            raise ConfigError(f"primitive {index} extends outside the grid")
        name = prim.label or f"region{index}"
        if name in regions:
            raise ConfigError(f"duplicate region label {name!r}")
        regions[name] = index
        mask = prim.mask(xx, zz)
        echo[mask] = prim.level
        labels[mask] = index
    return Phantom(echo, labels, regions, grid)


def draw_reflectivity(phantom, seed):
    """o = m * p with m drawn from the keyed speckle stream for `seed`."""
    speckle = SpeckleField.draw(phantom.grid, seed)
    return TissueReflectivity(speckle.values * phantom.echo_map, phantom.grid)


def cloud_from_reflectivity(reflectivity):
    """One scatterer per grid pixel, at the pixel center, amplitude o(i, j).

    For faithful speckle the axial pixel pitch should be at least 4 samples
    per wavelength; the CLI validates that, this function does not.
    """
    grid = reflectivity.grid
    xx, zz = np.meshgrid(grid.x, grid.z)
    return ScattererCloud(xx.ravel(), zz.ravel(), reflectivity.values.ravel())


def simulate_channel_data(cloud, geometry, transmit_angle=0.0, pulse=None,
                          noise_std=0.0, seed=0, duration=None, start_time=0.0):
    """Single plane-wave echo simulation.

    Parameters
    ----------
    cloud : ScattererCloud
        Point scatterers; an empty cloud yields noise-only output.
    geometry : ProbeGeometry
    transmit_angle : float
        Plane-wave steering angle in radians, |angle| < pi/2.
    pulse : GaussianPulse, optional
        Defaults to a 0.6 fractional-bandwidth burst at the probe's
        center frequency.
    noise_std : float
        Standard deviation of additive white channel noise.
    seed : int
        Base seed for the noise stream.
    duration : float, optional
        Record length in seconds; by default long enough to hold the
        latest echo plus the pulse tail.
    start_time : float
        Acquisition time of the first sample.

    Returns
    -------
    ChannelData with samples of shape (Nt, Ne).
    """
    if not (abs(transmit_angle) < np.pi / 2):
        raise ConfigError("transmit angle must satisfy |angle| < pi/2")
    if not (np.isfinite(noise_std) and noise_std >= 0):
        raise ConfigError(f"noise_std must be >= 0, got {noise_std}")
    if pulse is None:
        pulse = GaussianPulse(geometry.center_frequency)

    fs = geometry.sampling_frequency
    c = geometry.sound_speed
    elem_x = geometry.element_positions  # (Ne,)
    ne = elem_x.size

    if len(cloud):
        tau_tx = (cloud.z * np.cos(transmit_angle)
                  + cloud.x * np.sin(transmit_angle)) / c  # (S,)
        tau = tau_tx[:, None] + np.hypot(cloud.x[:, None] - elem_x[None, :],
                                         cloud.z[:, None]) / c  # (S, Ne)
        latest = float(tau.max())
    else:
        tau = None
        latest = start_time

    if duration is None:
        duration = latest - start_time + 2.0 * pulse.support
    if not (duration > 0):
        raise ConfigError(f"record duration must be positive, got {duration}")
    nt = int(math.ceil(duration * fs)) + 1

    samples = np.zeros((nt, ne))
    if tau is not None:
        half = int(math.ceil(pulse.support * fs))
        offsets = np.arange(2 * half + 1)  # (W,)
        for e in range(ne):
            center = (tau[:, e] - start_time) * fs  # (S,) fractional sample index
            base = np.ceil(center).astype(np.int64) - half  # (S,)
            idx = base[:, None] + offsets[None, :]  # (S, W)
            t = start_time + idx / fs
            contrib = cloud.amplitude[:, None] * pulse(t - tau[:, e][:, None])
            valid = (idx >= 0) & (idx < nt)
            np.add.at(samples[:, e], idx[valid], contrib[valid])

    if noise_std > 0:
        samples = samples + noise_std * stream(seed, "channel-noise").standard_normal(
            (nt, ne))
    return ChannelData(samples, geometry, transmit_angle=transmit_angle,
                       start_time=start_time)


def empirical_sample(phantom, speckle, sample_seed):
    """One diffusion-style sample o_c = m * p + sqrt(p) * g_c.

    The speckle field m is shared across samples; only g_c changes with
    `sample_seed`.  Pixels with p = 0 are exactly zero in every sample.
    """
    if speckle.values.shape != phantom.grid.shape:
        raise DataError("speckle field does not match the phantom grid")
    p = phantom.echo_map
    g = stream(sample_seed, "sample-noise").standard_normal(phantom.grid.shape)
    values = speckle.values * p + np.sqrt(p) * g
    return RfImage(values, phantom.grid)
