"""Delay-and-sum and eigenspace minimum-variance beamforming.

The per-pixel receive vector y (Ne elements, Np time taps) is reduced to a
pixel value two ways:

  das         apodized sum of the center tap
  ebmv        minimum-variance weights from a subarray-averaged covariance,
              projected onto the dominant eigenspace, then applied to each
              subarray and averaged

The covariance of a pixel is averaged over all length-L sliding subarrays
and over the Np taps, then diagonally loaded with
eps = loading_coefficient * trace / L.  MV weights solve R w = 1 up to the
unit-sum constraint; the eigenspace step keeps eigenvectors whose
eigenvalues reach subspace_criterion * lambda_max (ties included) and
projects the MV weights onto their span.

Image-level drivers run on a pluggable kernel backend (compiled Cython or
vectorized NumPy, see pwvar._kernels); the per-operation functions in this
module are the plain reference path the kernels are tested against.
Masked or out-of-recording reads contribute zero rather than clamping.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.lib.stride_tricks import sliding_window_view

from . import _kernels
from .core import RfImage
from .errors import ConfigError, DataError, DegenerateInputError, NumericsError

__all__ = [
    "BeamformerConfig",
    "CovarianceEstimate",
    "EigenBasis",
    "compute_delays",
    "aperture_interval",
    "extract_delayed",
    "das",
    "estimate_covariance",
    "mv_weights",
    "signal_subspace",
    "ebmv_weights",
    "ebmv_pixel",
    "ebmv_image",
]


@dataclass(frozen=True)
class BeamformerConfig:
    """Knobs shared by both beamformers.

    subarray_length None resolves to 80 when the probe has at least 80
    elements, otherwise to the element count.  f_number None disables the
    expanding-aperture mask.  apodization None picks the per-method
    default: "hann" for das, "none" for ebmv.
    """

    subarray_length: int | None = None
    loading_coefficient: float = 0.01
    subspace_criterion: float = 0.05
    temporal_window: int = 1
    f_number: float | None = 1.75
    apodization: str | None = None

    def __post_init__(self):
        if self.subarray_length is not None and int(self.subarray_length) < 1:
            raise ConfigError("subarray_length must be >= 1")
        if not (np.isfinite(self.loading_coefficient)
                and self.loading_coefficient >= 0):
            raise ConfigError("loading_coefficient must be >= 0")
        if not (0 < self.subspace_criterion <= 1):
            raise ConfigError("subspace_criterion must be in (0, 1]")
        if int(self.temporal_window) < 1:
            raise ConfigError("temporal_window must be >= 1")
        if self.f_number is not None and not (self.f_number > 0):
            raise ConfigError("f_number must be positive or None")
        if self.apodization not in (None, "none", "hann"):
            raise ConfigError(f"unknown apodization {self.apodization!r}")

    def resolved_subarray(self, element_count):
        if self.subarray_length is None:
            return 80 if element_count >= 80 else element_count
        L = int(self.subarray_length)
        if L > element_count:
            raise ConfigError(
                f"subarray_length {L} exceeds element count {element_count}")
        return L


@dataclass(frozen=True)
class CovarianceEstimate:
    """Loaded subarray covariance plus how it was built."""

    matrix: np.ndarray  # (L, L)
    subarray_length: int
    loading: float


@dataclass(frozen=True)
class EigenBasis:
    """Full eigendecomposition, eigenvalues descending, plus the cut."""

    eigenvalues: np.ndarray  # (L,) descending
    eigenvectors: np.ndarray  # (L, L), column j pairs with eigenvalues[j]
    selected_count: int


def compute_delays(grid, geometry, transmit_angle=0.0):
    """Round-trip delay table, shape (Nz, Nx, Ne), in seconds.

    Plane-wave transmit: (z cos a + x sin a) / c.  Receive: euclidean
    distance from pixel to element over c.
    """
    if not (abs(transmit_angle) < np.pi / 2):
        raise ConfigError("transmit angle must satisfy |angle| < pi/2")
    c = geometry.sound_speed
    x = grid.x[None, :, None]  # (1, Nx, 1)
    z = grid.z[:, None, None]  # (Nz, 1, 1)
    ex = geometry.element_positions[None, None, :]  # (1, 1, Ne)
    tx = (z * np.cos(transmit_angle) + x * np.sin(transmit_angle)) / c
    dx = x - ex
    rx = np.sqrt(dx * dx + z * z) / c
    return tx + rx


def aperture_interval(element_positions, x_pixel, z_pixel, f_number):
    """Active contiguous element range [e0, e1) for the f-number aperture."""
    if f_number is None:
        return 0, element_positions.size
    half = z_pixel / (2.0 * f_number)
    e0 = int(np.searchsorted(element_positions, x_pixel - half, side="left"))
    e1 = int(np.searchsorted(element_positions, x_pixel + half, side="right"))
    return e0, e1


def extract_delayed(data, delays, iz, ix, mask=None, temporal_window=1):
    """Delayed data matrix y for one pixel, shape (Ne, Np).

    Tap k is read at delay + (k - (Np-1)/2) / fs by linear interpolation
    between neighboring samples; reads outside the recording and elements
    excluded by `mask` are zero.
    """
    taps = int(temporal_window)
    if taps < 1:
        raise ConfigError("temporal_window must be >= 1")
    samples = data.samples
    nt, ne = samples.shape
    fs = data.geometry.sampling_frequency
    tau = delays[iz, ix, :]  # (Ne,)
    offsets = np.arange(taps) - (taps - 1) / 2.0  # (Np,)
    fi = (tau[:, None] - data.start_time) * fs + offsets[None, :]  # (Ne, Np)
    i0 = np.floor(fi).astype(np.int64)
    frac = fi - i0
    y = np.zeros((ne, taps))
    lo_ok = (i0 >= 0) & (i0 <= nt - 1)
    hi_ok = (i0 + 1 >= 0) & (i0 + 1 <= nt - 1)
    cols = np.broadcast_to(np.arange(ne)[:, None], fi.shape)
    y[lo_ok] += (1.0 - frac[lo_ok]) * samples[i0[lo_ok], cols[lo_ok]]
    y[hi_ok] += frac[hi_ok] * samples[i0[hi_ok] + 1, cols[hi_ok]]
    if mask is not None:
        y[~np.asarray(mask, dtype=bool), :] = 0.0
    return y


def estimate_covariance(y, config=None):
    """Subarray-averaged, diagonally loaded covariance of one pixel's data.

    y has shape (Ne,) or (Ne, Np).  All (Ne - L + 1) sliding subarrays and
    all taps contribute one outer product each.  An all-zero y has zero
    trace and raises DegenerateInputError.
    """
    config = config or BeamformerConfig()
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2:
        raise DataError(f"delayed data must be (Ne,) or (Ne, Np), got {y.shape}")
    ne, taps = y.shape
    L = config.resolved_subarray(ne)
    windows = sliding_window_view(y, L, axis=0)  # (K, Np, L)
    count = windows.shape[0] * taps
    r0 = np.tensordot(windows, windows, axes=([0, 1], [0, 1])) / count
    trace = float(np.trace(r0))
    if trace == 0.0:
        raise DegenerateInputError("delayed data has zero energy")
    eps = config.loading_coefficient * trace / L
    r = r0 + eps * np.eye(L)
    r = (r + r.T) / 2.0
    return CovarianceEstimate(r, L, eps)


def mv_weights(cov):
    """Minimum-variance weights: solve R a = 1, normalize to unit sum."""
    r = cov.matrix
    try:
        factor = scipy.linalg.cho_factor(r, check_finite=False)
        a = scipy.linalg.cho_solve(factor, np.ones(r.shape[0]),
                                   check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        cond = float(np.linalg.cond(r))
        raise NumericsError(
            f"covariance solve failed ({exc}); condition number ~{cond:.3e}"
        ) from exc
    return a / a.sum()


def signal_subspace(cov, criterion=0.05):
    """Eigendecomposition with the signal-space cut.

    Keeps every eigenvalue >= criterion * lambda_max; exact ties at the
    threshold are included.  At least one eigenvector is always selected.
    """
    if not (0 < criterion <= 1):
        raise ConfigError("subspace criterion must be in (0, 1]")
    r = cov.matrix if isinstance(cov, CovarianceEstimate) else np.asarray(cov)
    try:
        vals, vecs = np.linalg.eigh(r)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"eigendecomposition failed: {exc}") from exc
    vals = vals[::-1].copy()  # descending
    vecs = vecs[:, ::-1].copy()
    count = int(np.count_nonzero(vals >= criterion * vals[0]))
    return EigenBasis(vals, vecs, max(count, 1))


def ebmv_weights(w_mv, basis):
    """Project MV weights onto the selected eigenspace."""
    es = basis.eigenvectors[:, :basis.selected_count]  # (L, Num)
    return es @ (es.T @ w_mv)


def ebmv_pixel(y, config=None):
    """Full eigenspace-MV chain for one pixel's delayed data matrix."""
    config = config or BeamformerConfig()
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    cov = estimate_covariance(y, config)
    w = ebmv_weights(mv_weights(cov), signal_subspace(cov, config.subspace_criterion))
    center = y[:, (y.shape[1] - 1) // 2]  # (Ne,)
    subarrays = sliding_window_view(center, cov.subarray_length)  # (K, L)
    return float((subarrays @ w).mean())


def _run_blocks(fn, grid, threads):
    """Split the image into row blocks, run fn(z_rows) per block."""
    nz = grid.nz
    out = np.empty(grid.shape)
    step = 8
    blocks = [(i, min(i + step, nz)) for i in range(0, nz, step)]
    if threads <= 1 or len(blocks) == 1:
        for lo, hi in blocks:
            out[lo:hi] = fn(grid.z[lo:hi])
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            futures = {pool.submit(fn, grid.z[lo:hi]): (lo, hi)
                       for lo, hi in blocks}
            for fut, (lo, hi) in futures.items():
                out[lo:hi] = fut.result()
    return out


def _common_args(data, grid, config):
    angle = data.transmit_angle
    return dict(
        samples=np.ascontiguousarray(data.samples),
        elem_x=np.ascontiguousarray(data.geometry.element_positions),
        fs=data.geometry.sampling_frequency,
        t0=data.start_time,
        cos_a=float(np.cos(angle)),
        sin_a=float(np.sin(angle)),
        c=data.geometry.sound_speed,
        x=np.ascontiguousarray(grid.x),
        f_number=0.0 if config.f_number is None else float(config.f_number),
    )


def das(data, grid, config=None, threads=1, backend=None):
    """Delay-and-sum image: apodized sum of the center tap at every pixel."""
    config = config or BeamformerConfig()
    kern = _kernels.get_backend(backend)
    apod = config.apodization or "hann"
    args = _common_args(data, grid, config)

    def block(z_rows):
        return kern.das_block(z=np.ascontiguousarray(z_rows),
                              hann=1 if apod == "hann" else 0, **args)

    return RfImage(_run_blocks(block, grid, threads), grid)


def ebmv_image(data, grid, config=None, threads=1, backend=None):
    """Eigenspace-MV image.

    Each pixel uses the contiguous active subaperture from the f-number
    mask, a subarray length of min(L, active count), and the ebmv_pixel
    chain; pixels with no active elements or zero signal map to 0.
    """
    config = config or BeamformerConfig()
    if config.apodization == "hann":
        raise ConfigError("ebmv does not combine with hann apodization")
    ne = data.geometry.element_count
    L = config.resolved_subarray(ne)
    kern = _kernels.get_backend(backend)
    args = _common_args(data, grid, config)

    def block(z_rows):
        return kern.ebmv_block(
            z=np.ascontiguousarray(z_rows),
            subarray=L,
            loading=float(config.loading_coefficient),
            criterion=float(config.subspace_criterion),
            taps=int(config.temporal_window),
            **args,
        )

    values = _run_blocks(block, grid, threads)
    if not np.all(np.isfinite(values)):
        raise NumericsError("ebmv produced non-finite pixels")
    return RfImage(values, grid)
