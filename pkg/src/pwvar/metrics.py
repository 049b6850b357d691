"""Image quality metrics: resolution, lesion detectability, speckle SNR.

All metrics work on envelope (or otherwise nonnegative) images unless
noted.  Regions select pixels by geometry or by segmentation label and
resolve to boolean masks on the imaging grid.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateRegionError, NoPeakError

__all__ = [
    "CircleRegion",
    "RectRegion",
    "LabelRegion",
    "fwhm",
    "gcnr",
    "snr",
    "MetricResult",
    "MetricReport",
]


@dataclass(frozen=True)
class CircleRegion:
    x: float
    z: float
    radius: float

    def resolve(self, grid, labels=None):
        if not (self.radius > 0):
            raise ConfigError("region radius must be positive")
        xx = grid.x[None, :] - self.x
        zz = grid.z[:, None] - self.z
        mask = xx * xx + zz * zz <= self.radius * self.radius
        return _checked(mask, "circle region")


@dataclass(frozen=True)
class RectRegion:
    x0: float
    x1: float
    z0: float
    z1: float

    def resolve(self, grid, labels=None):
        if not (self.x0 < self.x1 and self.z0 < self.z1):
            raise ConfigError("rect region needs x0 < x1 and z0 < z1")
        inx = (grid.x >= self.x0) & (grid.x <= self.x1)
        inz = (grid.z >= self.z0) & (grid.z <= self.z1)
        return _checked(inz[:, None] & inx[None, :], "rect region")


@dataclass(frozen=True)
class LabelRegion:
    """Pixels carrying one integer id in a segmentation map."""

    label: int

    def resolve(self, grid, labels=None):
        if labels is None:
            raise ConfigError("label region needs a segmentation map")
        labels = np.asarray(labels)
        if labels.shape != grid.shape:
            raise ConfigError(
                f"segmentation shape {labels.shape} does not match "
                f"grid {grid.shape}")
        return _checked(labels == int(self.label),
                        f"label region {self.label}")


def _checked(mask, what):
    if not mask.any():
        raise ConfigError(f"{what} selects no pixels")
    return mask


def _refine_peak(profile, m):
    """Parabola through three points around index m; returns peak value."""
    if m == 0 or m == profile.size - 1:
        raise NoPeakError("peak sits on the profile boundary")
    ym, y0, yp = profile[m - 1], profile[m], profile[m + 1]
    denom = ym - 2.0 * y0 + yp
    if denom == 0.0:
        raise NoPeakError("profile is flat around the peak")
    delta = 0.5 * (ym - yp) / denom
    return y0 - 0.25 * (ym - yp) * delta


def _cross_index(profile, m, level, direction):
    """Fractional index where the profile falls through `level`."""
    i = m
    while True:
        j = i + direction
        if j < 0 or j >= profile.size:
            raise NoPeakError("no half-maximum crossing inside the image")
        if profile[j] < level:
            return i + direction * (profile[i] - level) / (profile[i]
                                                           - profile[j])
        i = j


def fwhm(values, grid, peak_region, axis="lateral"):
    """Full width at half maximum around the brightest pixel of a region.

    The peak is located as the argmax inside peak_region, its height
    refined with a three-point parabola, and the half-height crossings
    found by linear interpolation along the image row (axis "lateral")
    or column (axis "axial") through the peak.  Returns meters.
    """
    img = np.asarray(values, dtype=np.float64)
    if img.shape != grid.shape:
        raise ConfigError(f"image shape {img.shape} does not match grid")
    mask = peak_region.resolve(grid)
    flat = np.where(mask.ravel(), img.ravel(), -np.inf)
    iz, ix = np.unravel_index(int(np.argmax(flat)), img.shape)
    if axis == "lateral":
        profile, m, step = img[iz, :], ix, grid.dx
    elif axis == "axial":
        profile, m, step = img[:, ix], iz, grid.dz
    else:
        raise ConfigError(f"axis must be lateral or axial, got {axis!r}")
    if step == 0.0:
        raise ConfigError("profile axis has a single pixel")
    level = _refine_peak(profile, m) / 2.0
    left = _cross_index(profile, m, level, -1)
    right = _cross_index(profile, m, level, +1)
    return float((right - left) * step)


def gcnr(values, region_inside, region_outside, grid=None, labels=None,
         bins=256):
    """Histogram overlap contrast: 1 - sum(min(h_in, h_out)).

    Both histograms share `bins` equal bins spanning the pooled value
    range and are normalized to unit sum, so the result lives in [0, 1]:
    0 for indistinguishable regions, 1 for perfectly separable ones.
    Masks may be given directly or as regions resolved against a grid.
    """
    img = np.asarray(values, dtype=np.float64)
    mi = _as_mask(region_inside, grid, labels)
    mo = _as_mask(region_outside, grid, labels)
    a, b = img[mi], img[mo]
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if not (hi > lo):
        return 0.0
    edges = np.linspace(lo, hi, int(bins) + 1)
    ha, _ = np.histogram(a, bins=edges)
    hb, _ = np.histogram(b, bins=edges)
    overlap = np.minimum(ha / a.size, hb / b.size).sum()
    return float(1.0 - overlap)


def snr(values, region, grid=None, labels=None):
    """Mean over standard deviation (ddof=1) inside the region."""
    img = np.asarray(values, dtype=np.float64)
    mask = _as_mask(region, grid, labels)
    picked = img[mask]
    if picked.size < 2:
        raise ConfigError("snr needs a region with at least two pixels")
    sd = picked.std(ddof=1)
    if sd == 0.0:
        raise DegenerateRegionError("region is constant, snr undefined")
    return float(picked.mean() / sd)


def _as_mask(region, grid, labels):
    if isinstance(region, np.ndarray):
        if region.dtype != bool:
            raise ConfigError("mask arrays must be boolean")
        return _checked(region, "mask")
    if grid is None:
        raise ConfigError("resolving a region needs the imaging grid")
    return region.resolve(grid, labels)


@dataclass(frozen=True)
class MetricResult:
    """One computed metric, or the reason it could not be computed."""

    name: str
    kind: str
    value: float | None = None
    error: str | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "value": self.value,
                "error": self.error, "detail": dict(self.detail)}


@dataclass(frozen=True)
class MetricReport:
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def failed(self):
        return tuple(e for e in self.entries if e.error is not None)

    def to_json(self):
        return json.dumps({"entries": [e.to_dict() for e in self.entries]},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        return cls(tuple(MetricResult(**e) for e in payload["entries"]))
