"""YAML run configuration shared by the pipeline stages.

One file describes a whole run: probe and grid, the phantom scene, and
per-stage parameter sections.  Stages read only their own section, so a
config can drive any subset of the pipeline.  Paths inside the file are
resolved relative to the file's directory.
"""

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .beamform import BeamformerConfig
from .core import ImagingGrid, ProbeGeometry
from .errors import ConfigError
from .phantom import Circle, GaussianPulse, Rect

__all__ = ["RunConfig", "load_config"]

_SECTIONS = ("probe", "grid", "phantom", "simulate", "beamform",
             "enhance", "metrics", "render")


@dataclass(frozen=True)
class RunConfig:
    seed: int
    probe: ProbeGeometry
    grid: ImagingGrid
    phantom: dict
    simulate: dict
    beamform: dict
    enhance: dict
    metrics: dict
    render: dict
    base_dir: Path
    raw_bytes: bytes

    @property
    def sha256(self):
        return hashlib.sha256(self.raw_bytes).hexdigest()

    def resolve_path(self, value):
        """A path from the file, made absolute against the file's home."""
        p = Path(str(value))
        return p if p.is_absolute() else self.base_dir / p


def _mapping(value, where):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{where} must be a mapping")
    return value


def _number(section, key, where, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"{where} is missing required key {key!r}")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    return float(value)


def _integer(section, key, where, default=None, required=False):
    value = _number(section, key, where, default=default, required=required)
    if value is None:
        return None
    if value != int(value):
        raise ConfigError(f"{where}.{key} must be an integer, got {value}")
    return int(value)


def _check_keys(section, allowed, where):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _build_probe(section):
    _check_keys(section, ("element_positions", "element_count", "pitch",
                          "center_frequency", "sampling_frequency",
                          "sound_speed"), "probe")
    if "element_positions" in section:
        positions = np.asarray(section["element_positions"], dtype=np.float64)
    else:
        count = _integer(section, "element_count", "probe", required=True)
        pitch = _number(section, "pitch", "probe", required=True)
        positions = (np.arange(count) - (count - 1) / 2.0) * pitch
    return ProbeGeometry(
        element_positions=positions,
        center_frequency=_number(section, "center_frequency", "probe",
                                 required=True),
        sampling_frequency=_number(section, "sampling_frequency", "probe",
                                   required=True),
        sound_speed=_number(section, "sound_speed", "probe", default=1540.0),
    )


def _build_grid(section):
    _check_keys(section, ("x0", "x1", "nx", "z0", "z1", "nz"), "grid")
    return ImagingGrid.regular(
        _number(section, "x0", "grid", required=True),
        _number(section, "x1", "grid", required=True),
        _integer(section, "nx", "grid", required=True),
        _number(section, "z0", "grid", required=True),
        _number(section, "z1", "grid", required=True),
        _integer(section, "nz", "grid", required=True),
    )


def load_config(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    doc = _mapping(doc, "config")
    _check_keys(doc, ("seed",) + _SECTIONS, "config")
    seed = _integer(doc, "seed", "config", required=True)
    sections = {name: _mapping(doc.get(name), name) for name in _SECTIONS}
    if not sections["probe"]:
        raise ConfigError("config needs a probe section")
    if not sections["grid"]:
        raise ConfigError("config needs a grid section")
    return RunConfig(
        seed=seed,
        probe=_build_probe(sections["probe"]),
        grid=_build_grid(sections["grid"]),
        phantom=sections["phantom"],
        simulate=sections["simulate"],
        beamform=sections["beamform"],
        enhance=sections["enhance"],
        metrics=sections["metrics"],
        render=sections["render"],
        base_dir=path.resolve().parent,
        raw_bytes=raw,
    )


def phantom_primitives(config):
    """Parse the phantom section into (primitives, background, points)."""
    section = config.phantom
    _check_keys(section, ("background", "primitives", "points"), "phantom")
    background = _number(section, "background", "phantom", default=1.0)
    primitives = []
    for i, spec in enumerate(section.get("primitives") or []):
        spec = dict(_mapping(spec, f"phantom.primitives[{i}]"))
        kind = spec.pop("kind", None)
        where = f"phantom.primitives[{i}]"
        label = spec.pop("label", None)
        if kind == "circle":
            _check_keys(spec, ("x", "z", "radius", "level"), where)
            primitives.append(Circle(
                x=_number(spec, "x", where, required=True),
                z=_number(spec, "z", where, required=True),
                radius=_number(spec, "radius", where, required=True),
                level=_number(spec, "level", where, required=True),
                label=label,
            ))
        elif kind == "rect":
            _check_keys(spec, ("x0", "x1", "z0", "z1", "level"), where)
            primitives.append(Rect(
                x0=_number(spec, "x0", where, required=True),
                x1=_number(spec, "x1", where, required=True),
                z0=_number(spec, "z0", where, required=True),
                z1=_number(spec, "z1", where, required=True),
                level=_number(spec, "level", where, required=True),
                label=label,
            ))
        else:
            raise ConfigError(f"{where}: kind must be circle or rect")
    points = []
    for i, spec in enumerate(section.get("points") or []):
        spec = _mapping(spec, f"phantom.points[{i}]")
        where = f"phantom.points[{i}]"
        _check_keys(spec, ("x", "z", "amplitude"), where)
        points.append((
            _number(spec, "x", where, required=True),
            _number(spec, "z", where, required=True),
            _number(spec, "amplitude", where, required=True),
        ))
    return primitives, background, points


def beamformer_from_config(config):
    section = config.beamform
    _check_keys(section, ("subarray_length", "loading_coefficient",
                          "subspace_criterion", "temporal_window",
                          "f_number", "apodization"), "beamform")
    kwargs = {}
    if "subarray_length" in section:
        kwargs["subarray_length"] = _integer(section, "subarray_length",
                                             "beamform")
    for key in ("loading_coefficient", "subspace_criterion", "f_number"):
        if key in section:
            value = section[key]
            kwargs[key] = None if value is None else _number(
                section, key, "beamform")
    if "temporal_window" in section:
        kwargs["temporal_window"] = _integer(section, "temporal_window",
                                             "beamform")
    if "apodization" in section:
        kwargs["apodization"] = section["apodization"]
    return BeamformerConfig(**kwargs)


def pulse_from_config(config):
    bw = _number(config.simulate, "fractional_bandwidth", "simulate",
                 default=0.6)
    return GaussianPulse(config.probe.center_frequency,
                         fractional_bandwidth=bw)


def simulate_params(config):
    section = config.simulate
    _check_keys(section, ("transmit_angle", "noise_std", "start_time",
                          "duration", "fractional_bandwidth"), "simulate")
    return dict(
        transmit_angle=_number(section, "transmit_angle", "simulate",
                               default=0.0),
        noise_std=_number(section, "noise_std", "simulate", default=0.0),
        start_time=_number(section, "start_time", "simulate", default=0.0),
        duration=_number(section, "duration", "simulate", default=None),
    )


def enhance_params(config):
    section = config.enhance
    _check_keys(section, ("sample_count", "steps", "sigma_max", "sigma_min",
                          "eta", "eta_b", "measurement_noise", "denoiser"),
                "enhance")
    return dict(
        sample_count=_integer(section, "sample_count", "enhance", default=10),
        steps=_integer(section, "steps", "enhance", default=50),
        sigma_max=_number(section, "sigma_max", "enhance", default=1.0),
        sigma_min=_number(section, "sigma_min", "enhance", default=0.002),
        eta=_number(section, "eta", "enhance", default=0.85),
        eta_b=_number(section, "eta_b", "enhance", default=1.0),
        measurement_noise=_number(section, "measurement_noise", "enhance",
                                  default=None),
        denoiser=_mapping(section.get("denoiser"), "enhance.denoiser"),
    )


def render_dynamic_range(config):
    _check_keys(config.render, ("dynamic_range",), "render")
    dr = _number(config.render, "dynamic_range", "render", default=60.0)
    if dr <= 0:
        raise ConfigError("render.dynamic_range must be positive")
    return dr


def check_axial_sampling(config):
    """The scatterer-per-pixel speckle model needs a dense axial grid."""
    wavelength = config.probe.sound_speed / config.probe.center_frequency
    dz = config.grid.dz
    if dz == 0.0:
        return
    per_wavelength = wavelength / dz
    if per_wavelength < 4.0 - 1e-9:
        raise ConfigError(
            f"axial grid too coarse: {per_wavelength:.2f} pixels per "
            f"wavelength, need at least 4 (dz <= {wavelength / 4.0:.3e})")
