"""Posterior sampling by iterative denoising, and the statistics over samples.

A measurement x is treated as clean image plus zero-mean noise of standard
deviation `measurement_noise`.  Starting from x perturbed up to the top of
a decreasing noise schedule, each step denoises at the current level and
re-noises to the next one, blending back toward the measurement while the
schedule sits above the measurement noise and interpolating denoiser
output with a scaled residual once below it.  Repeating the walk with
different seeds gives samples from an approximate posterior; their
pixelwise variance is the despeckling output and their pixelwise median a
denoised image.

Denoisers are pluggable: anything with denoise(values, sigma) -> ndarray
of the same shape works.  WienerDenoiser is the closed-form Gaussian
prior (scalar or per-pixel variance); ExternalDenoiser shells out to a
subprocess speaking the tensor-file protocol.

Every random draw comes from a keyed counter-based stream
(seed, "diffusion", sample_index, step), so results are independent of
thread count and any step's noise can be regenerated in isolation.
"""

import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DenoiserError, NumericsError
from .streams import stream
from .tensorfile import read_tensor, write_sidecar, write_tensor

__all__ = [
    "NoiseSchedule",
    "make_schedule",
    "WienerDenoiser",
    "ExternalDenoiser",
    "SamplerConfig",
    "SampleSet",
    "sample_once",
    "sample_many",
    "variance_image",
    "median_image",
    "estimate_noise_std",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing positive noise levels, largest first."""

    sigmas: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=np.float64)
        if s.ndim != 1 or s.size < 2:
            raise ConfigError("schedule needs at least two levels")
        if not np.all(np.isfinite(s)) or not np.all(s > 0):
            raise ConfigError("noise levels must be finite and positive")
        if not np.all(np.diff(s) < 0):
            raise ConfigError("noise levels must be strictly decreasing")
        object.__setattr__(self, "sigmas", s)

    @property
    def steps(self):
        return self.sigmas.size


def make_schedule(steps=50, sigma_max=1.0, sigma_min=0.002):
    """Geometric schedule from sigma_max down to sigma_min."""
    if steps < 2:
        raise ConfigError("schedule needs at least two levels")
    if not (sigma_max > sigma_min > 0):
        raise ConfigError("need sigma_max > sigma_min > 0")
    return NoiseSchedule(np.geomspace(sigma_max, sigma_min, steps))


class WienerDenoiser:
    """Closed-form denoiser for a zero-mean Gaussian prior.

    prior_variance is a scalar or a per-pixel map; the estimate of the
    clean image from x observed at noise level sigma is
    v / (v + sigma^2) * x.  Pixels with v = 0 shrink exactly to zero.
    """

    def __init__(self, prior_variance):
        v = np.asarray(prior_variance, dtype=np.float64)
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ConfigError("prior variance must be finite and >= 0")
        self.prior_variance = v

    def denoise(self, values, sigma):
        v = self.prior_variance
        return v / (v + sigma * sigma) * values


class ExternalDenoiser:
    """Denoiser that shells out to `executable request.ust response.ust`.

    Each call writes the noisy image as a rank-2 tensor file plus a
    sidecar holding the noise level under the key `sigma`, runs the tool,
    and reads the response tensor, which must have the same shape.  Files
    are numbered and left in the workdir for inspection.  Tool failures
    of any kind (nonzero exit, missing or malformed response, shape
    mismatch) raise DenoiserError.
    """

    def __init__(self, executable, workdir):
        self.executable = [str(p) for p in (
            executable if isinstance(executable, (list, tuple))
            else [executable])]
        self.workdir = Path(workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._calls = 0

    def denoise(self, values, sigma):
        with self._lock:
            self._calls += 1
            n = self._calls
        req = self.workdir / f"req_{n:06d}.ust"
        resp = self.workdir / f"resp_{n:06d}.ust"
        write_tensor(req, np.asarray(values))
        write_sidecar(req, {"sigma": float(sigma)})
        try:
            done = subprocess.run(
                self.executable + [str(req), str(resp)],
                capture_output=True, text=True)
        except OSError as exc:
            raise DenoiserError(f"could not launch denoiser: {exc}") from exc
        if done.returncode != 0:
            tail = done.stderr.strip().splitlines()[-3:]
            raise DenoiserError(
                f"denoiser exited with {done.returncode}: "
                + " | ".join(tail))
        if not resp.exists():
            raise DenoiserError(f"denoiser wrote no response {resp.name}")
        try:
            out = read_tensor(resp)
        except DataError as exc:
            raise DenoiserError(f"malformed response: {exc}") from exc
        if out.shape != np.shape(values):
            raise DenoiserError(
                f"response shape {out.shape} does not match "
                f"request {np.shape(values)}")
        return np.asarray(out, dtype=np.float64)


@dataclass(frozen=True)
class SamplerConfig:
    measurement_noise: float
    schedule: NoiseSchedule = field(default_factory=make_schedule)
    sample_count: int = 10
    eta: float = 0.85
    eta_b: float = 1.0
    base_seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.measurement_noise)
                and self.measurement_noise >= 0):
            raise ConfigError("measurement_noise must be finite and >= 0")
        if int(self.sample_count) < 1:
            raise ConfigError("sample_count must be >= 1")
        if not (0.0 <= self.eta <= 1.0):
            raise ConfigError("eta must be in [0, 1]")
        if not (0.0 <= self.eta_b <= 1.0):
            raise ConfigError("eta_b must be in [0, 1]")


def _noise(config, sample_index, step, shape):
    rng = stream(config.base_seed, "diffusion", int(sample_index), int(step))
    return rng.standard_normal(shape)


def sample_once(values, denoiser, config, sample_index=0):
    """One full denoising trajectory; returns the final clean estimate.

    The walk is deterministic given (base_seed, sample_index).  Noise for
    the initial perturbation uses step key 0 and the transition leaving
    step t (1-based) uses step key t.
    """
    x = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DataError("measurement contains non-finite values")
    sig = config.schedule.sigmas
    steps = sig.size
    gamma = config.measurement_noise

    if sig[0] > gamma:
        bump = np.sqrt(max(sig[0] ** 2 - gamma ** 2, 0.0))
        xt = x + bump * _noise(config, sample_index, 0, x.shape)
    else:
        xt = x.copy()

    for t in range(steps):
        x0 = denoiser.denoise(xt, float(sig[t]))
        x0 = np.asarray(x0, dtype=np.float64)
        if not np.all(np.isfinite(x0)):
            raise NumericsError(
                f"denoiser output not finite at step {t + 1} "
                f"(sigma={sig[t]:.6g})")
        if t == steps - 1:
            return x0
        nxt = float(sig[t + 1])
        eps = _noise(config, sample_index, t + 1, x.shape)
        if nxt >= gamma:
            hold = np.sqrt(max(nxt ** 2 - config.eta_b ** 2 * gamma ** 2,
                               0.0))
            xt = (1.0 - config.eta_b) * x0 + config.eta_b * x + hold * eps
        else:
            pull = np.sqrt(1.0 - config.eta ** 2) * nxt / max(gamma, 1e-12)
            xt = x0 + pull * (x - x0) + config.eta * nxt * eps
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class SampleSet:
    """Stack of posterior samples, shape (C, Nz, Nx)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] < 1:
            raise DataError(f"samples must be (C, Nz, Nx), got {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_arrays(cls, arrays):
        return cls(np.stack([np.asarray(a, dtype=np.float64)
                             for a in arrays]))

    @property
    def count(self):
        return self.values.shape[0]


def sample_many(values, denoiser, config, threads=1):
    """Draw sample_count independent trajectories and stack them.

    Thread count changes wall time only, never the result, because each
    (sample, step) pair draws from its own keyed stream.
    """

    def one(i):
        try:
            return sample_once(values, denoiser, config, sample_index=i)
        except DenoiserError as exc:
            raise DenoiserError(f"sample {i}: {exc}") from exc

    count = config.sample_count
    if threads <= 1 or count == 1:
        arrays = [one(i) for i in range(count)]
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            arrays = list(pool.map(one, range(count)))
    return SampleSet.from_arrays(arrays)


def variance_image(samples):
    """Pixelwise sample variance (ddof=1) across the set."""
    if samples.count < 2:
        raise ConfigError("variance needs at least two samples")
    return samples.values.var(axis=0, ddof=1)


def median_image(samples):
    """Pixelwise median across the set."""
    return np.median(samples.values, axis=0)


def estimate_noise_std(values):
    """Robust noise level from the diagonal detail of 2x2 blocks.

    d = (a - b - c + d)/2 over disjoint 2x2 blocks cancels smooth image
    content and has std equal to the pixel noise std; the median absolute
    value over blocks divided by the standard normal quartile recovers it.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise DataError("need a 2-D image with at least 2x2 pixels")
    a = x[0::2, 0::2]
    b = x[0::2, 1::2]
    c = x[1::2, 0::2]
    d = x[1::2, 1::2]
    m = min(a.shape[0], b.shape[0], c.shape[0], d.shape[0])
    n = min(a.shape[1], b.shape[1], c.shape[1], d.shape[1])
    detail = (a[:m, :n] - b[:m, :n] - c[:m, :n] + d[:m, :n]) / 2.0
    return float(np.median(np.abs(detail)) / 0.6744897501960817)
