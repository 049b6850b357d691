"""Command line pipeline.

Stages communicate through tensor-file bundles on disk, so each one can
run alone or be replayed.  Every stage that writes a directory also
writes a manifest.json there: config and input hashes, output names, the
kernel backend, and the seed.  No timestamps, so reruns are
byte-identical.

Exit codes: 0 success, 2 configuration problem, 3 broken or degenerate
data (including numerical failures), 4 external denoiser failure.
"""

import argparse
import hashlib
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__, _kernels
from .beamform import das, ebmv_image
from .config import (
    check_axial_sampling,
    beamformer_from_config,
    enhance_params,
    load_config,
    phantom_primitives,
    pulse_from_config,
    render_dynamic_range,
    simulate_params,
)
from .core import RfImage, envelope_detect, normalize_unit
from .diffusion import (
    ExternalDenoiser,
    SamplerConfig,
    WienerDenoiser,
    estimate_noise_std,
    make_schedule,
    median_image,
    sample_many,
    variance_image,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateRegionError,
    DenoiserError,
    NoPeakError,
    NumericsError,
)
from .metrics import (
    CircleRegion,
    LabelRegion,
    MetricReport,
    MetricResult,
    RectRegion,
    fwhm,
    gcnr,
    snr,
)
from .phantom import (
    ScattererCloud,
    cloud_from_reflectivity,
    draw_reflectivity,
    make_phantom,
    simulate_channel_data,
)
from .render import direct_db, envelope_db, write_pgm
from .tensorfile import (
    load_channel_data,
    load_image,
    load_labels,
    save_channel_data,
    save_image,
    save_labels,
    sidecar_path,
)


def _sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _bundle(path):
    """The files a tensor bundle occupies on disk (tensor, sidecar, kin)."""
    path = Path(path)
    out = [path]
    meta = Path(sidecar_path(path))
    if meta.exists():
        out.append(meta)
    elements = path.with_name(path.stem + ".elements" + path.suffix)
    if elements.exists():
        out.append(elements)
    return out


def _write_manifest(outdir, stage, config, inputs, seed, extra=None,
                    backend=None):
    outdir = Path(outdir)
    outputs = sorted(p.name for p in outdir.iterdir()
                     if p.is_file() and p.name != "manifest.json")
    payload = {
        "stage": stage,
        "config_sha256": config.sha256,
        "inputs": {Path(p).name: _sha256_file(p) for p in inputs},
        "outputs": outputs,
        "backend": backend or _kernels.active_name(),
        "seed": seed,
        "versions": {"pwvar": __version__,
                     "numpy": np.__version__,
                     "scipy": scipy.__version__},
    }
    if extra:
        payload.update(extra)
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    (outdir / "manifest.json").write_text(text)


# ------------------------------------------------------------- stages

def run_simulate(config, config_path, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    check_axial_sampling(config)
    primitives, background, points = phantom_primitives(config)
    phantom = make_phantom(config.grid, primitives, background=background)
    cloud = cloud_from_reflectivity(draw_reflectivity(phantom, config.seed))
    if points:
        xs, zs, amps = (np.asarray(v, dtype=np.float64)
                        for v in zip(*points))
        cloud = cloud.concat(ScattererCloud(xs, zs, amps))
    params = simulate_params(config)
    data = simulate_channel_data(
        cloud, config.probe,
        transmit_angle=params["transmit_angle"],
        pulse=pulse_from_config(config),
        noise_std=params["noise_std"],
        seed=config.seed,
        duration=params["duration"],
        start_time=params["start_time"],
    )
    save_channel_data(outdir / "channels.ust", data)
    save_image(outdir / "phantom.ust", RfImage(phantom.echo_map, config.grid),
               extra={"kind": "echo-map"})
    save_labels(outdir / "labels.ust", phantom.region_labels,
                phantom.regions, config.grid)
    _write_manifest(outdir, "simulate", config, [config_path], config.seed)
    return outdir / "channels.ust"


def run_beamform(config, config_path, input_path, outdir, method,
                 threads=1, normalize=True, backend=None):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    data = load_channel_data(input_path)
    bf = beamformer_from_config(config)
    if method == "das":
        image = das(data, config.grid, bf, threads=threads, backend=backend)
    elif method == "ebmv":
        image = ebmv_image(data, config.grid, bf, threads=threads,
                           backend=backend)
    else:
        raise ConfigError(f"unknown beamforming method {method!r}")
    if normalize:
        image = normalize_unit(image)
    out_path = outdir / f"{method}.ust"
    save_image(out_path, image,
               extra={"kind": f"rf-{method}", "normalized": int(normalize)})
    _write_manifest(outdir, "beamform", config,
                    [config_path] + _bundle(input_path), config.seed,
                    extra={"method": method}, backend=backend)
    return out_path


def _build_denoiser(config, spec, grid, outdir, prior_map):
    kind = spec.get("kind", "wiener")
    if kind == "wiener":
        if prior_map is not None:
            image, _ = load_image(prior_map)
            if image.values.shape != grid.shape:
                raise ConfigError(
                    f"prior variance map shape {image.values.shape} does "
                    f"not match image grid {grid.shape}")
            return WienerDenoiser(image.values)
        if "prior_variance_file" in spec:
            path = config.resolve_path(spec["prior_variance_file"])
            if not Path(path).exists():
                raise ConfigError(f"prior variance file not found: {path}")
            return _build_denoiser(config, {"kind": "wiener"}, grid,
                                   outdir, path)
        value = spec.get("prior_variance", 1.0)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("enhance.denoiser.prior_variance must be "
                              "a number")
        return WienerDenoiser(float(value))
    if kind == "external":
        command = spec.get("command")
        if not command:
            raise ConfigError("enhance.denoiser.command is required for "
                              "an external denoiser")
        if isinstance(command, str):
            command = [command]
        workdir = spec.get("workdir")
        workdir = (config.resolve_path(workdir) if workdir
                   else Path(outdir) / "denoiser-io")
        return ExternalDenoiser(command, workdir)
    raise ConfigError(f"unknown denoiser kind {kind!r}")


def run_enhance(config, config_path, input_path, outdir, threads=1,
                prior_map=None):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    image, _ = load_image(input_path)
    peak = float(np.abs(image.values).max())
    if peak > 1.0 + 1e-6:
        raise ConfigError(
            f"enhance input must be normalized to [-1, 1], peak is "
            f"{peak:.6g}; run beamform with normalization on")
    params = enhance_params(config)
    if params["sample_count"] < 2:
        raise ConfigError("enhance needs sample_count >= 2 for a variance")
    schedule = make_schedule(params["steps"], params["sigma_max"],
                             params["sigma_min"])
    gamma = params["measurement_noise"]
    if gamma is None:
        gamma = estimate_noise_std(image.values)
    denoiser = _build_denoiser(config, params["denoiser"], image.grid,
                               outdir, prior_map)
    sampler = SamplerConfig(
        measurement_noise=gamma,
        schedule=schedule,
        sample_count=params["sample_count"],
        eta=params["eta"],
        eta_b=params["eta_b"],
        base_seed=config.seed,
    )
    samples = sample_many(image.values, denoiser, sampler, threads=threads)
    dr = render_dynamic_range(config)
    grid = image.grid
    for i in range(samples.count):
        rf = RfImage(samples.values[i], grid)
        save_image(outdir / f"sample_{i:02d}.ust", rf,
                   extra={"kind": "posterior-sample"})
        write_pgm(outdir / f"sample_{i:02d}.pgm", envelope_db(rf, dr))
    var = RfImage(variance_image(samples), grid)
    save_image(outdir / "variance.ust", var, extra={"kind": "variance"})
    write_pgm(outdir / "variance.pgm", direct_db(var, dr))
    med = RfImage(median_image(samples), grid)
    save_image(outdir / "median.ust", med, extra={"kind": "median"})
    write_pgm(outdir / "median.pgm", envelope_db(med, dr))
    inputs = [config_path] + _bundle(input_path)
    if prior_map is not None:
        inputs += _bundle(prior_map)
    _write_manifest(outdir, "enhance", config, inputs, config.seed,
                    extra={"measurement_noise": gamma})
    return outdir / "variance.ust"


_REGION_KEYS = {
    "circle": {"x", "z", "radius"},
    "rect": {"x0", "x1", "z0", "z1"},
    "label": {"id", "name"},
}


def _region_from(spec, names, where):
    if not isinstance(spec, dict):
        raise ConfigError(f"{where} must be a mapping")
    shape = spec.get("shape")
    if shape not in _REGION_KEYS:
        raise ConfigError(f"{where}: shape must be circle, rect, or label")
    unknown = set(spec) - _REGION_KEYS[shape] - {"shape"}
    if unknown:
        raise ConfigError(
            f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")

    def need(key):
        if key not in spec:
            raise ConfigError(f"{where} is missing {key!r}")
        value = spec[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}.{key} must be a number")
        return float(value)

    if shape == "circle":
        return CircleRegion(need("x"), need("z"), need("radius"))
    if shape == "rect":
        return RectRegion(need("x0"), need("x1"), need("z0"), need("z1"))
    if "id" in spec:
        return LabelRegion(int(need("id")))
    name = spec.get("name")
    if name not in names:
        raise ConfigError(f"{where}: unknown region label {name!r}")
    return LabelRegion(int(names[name]))


def run_metrics(config, config_path, input_path, labels_path, out_path,
                lenient=False):
    image, _ = load_image(input_path)
    grid = image.grid
    if labels_path is not None:
        labels, names = load_labels(labels_path)
        if labels.shape != grid.shape:
            raise ConfigError("label map does not match the image grid")
    else:
        labels, names = None, {}
    items = config.metrics.get("items")
    if not items:
        raise ConfigError("metrics config has no items")

    envelope = None
    entries = []
    for i, item in enumerate(items):
        where = f"metrics.items[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(f"{where} must be a mapping")
        name = str(item.get("name", f"item{i}"))
        kind = item.get("kind")
        source = item.get("input", "envelope")
        if source == "envelope":
            if envelope is None:
                envelope = envelope_detect(image).values
            values = envelope
        elif source == "raw":
            values = image.values
        else:
            raise ConfigError(f"{where}: input must be envelope or raw")
        try:
            if kind == "fwhm":
                axis = item.get("axis", "lateral")
                region = _region_from(item["region"], names,
                                      f"{where}.region")
                value = fwhm(values, grid, region, axis)
                entries.append(MetricResult(
                    name, "fwhm", value=value,
                    detail={"axis": axis, "unit": "m", "input": source}))
            elif kind == "gcnr":
                inside = _region_from(item["inside"], names,
                                      f"{where}.inside")
                outside = _region_from(item["outside"], names,
                                       f"{where}.outside")
                mi = inside.resolve(grid, labels)
                mo = outside.resolve(grid, labels)
                value = gcnr(values, mi, mo)
                entries.append(MetricResult(
                    name, "gcnr", value=value,
                    detail={"pixels_inside": int(mi.sum()),
                            "pixels_outside": int(mo.sum()),
                            "input": source}))
            elif kind == "snr":
                region = _region_from(item["region"], names,
                                      f"{where}.region")
                mask = region.resolve(grid, labels)
                value = snr(values, mask)
                entries.append(MetricResult(
                    name, "snr", value=value,
                    detail={"pixels": int(mask.sum()), "input": source}))
            else:
                raise ConfigError(
                    f"{where}: kind must be fwhm, gcnr, or snr")
        except KeyError as exc:
            raise ConfigError(f"{where} is missing {exc}") from exc
        except (NoPeakError, DegenerateRegionError) as exc:
            entries.append(MetricResult(name, str(kind), error=str(exc)))

    report = MetricReport(tuple(entries))
    payload = json.loads(report.to_json())
    payload["provenance"] = {
        "config_sha256": config.sha256,
        "input": {Path(input_path).name: _sha256_file(input_path)},
        "backend": _kernels.active_name(),
        "seed": config.seed,
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if report.failed and not lenient:
        for entry in report.failed:
            print(f"metric {entry.name} failed: {entry.error}",
                  file=sys.stderr)
        return 3
    return 0


def run_demo(config, config_path, outdir, threads=1):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    dr = render_dynamic_range(config)
    channels = run_simulate(config, config_path, outdir / "sim")
    prior = outdir / "sim" / "phantom.ust"
    labels = outdir / "sim" / "labels.ust"

    das_path = run_beamform(config, config_path, channels, outdir / "das",
                            "das", threads=threads)
    ebmv_path = run_beamform(config, config_path, channels, outdir / "ebmv",
                             "ebmv", threads=threads)
    run_enhance(config, config_path, das_path, outdir / "enh_das",
                threads=threads, prior_map=prior)
    run_enhance(config, config_path, ebmv_path, outdir / "enh_ebmv",
                threads=threads, prior_map=prior)

    panels = {
        "das.pgm": (das_path, envelope_db),
        "ebmv.pgm": (ebmv_path, envelope_db),
        "das_var.pgm": (outdir / "enh_das" / "variance.ust", direct_db),
        "ebmv_var.pgm": (outdir / "enh_ebmv" / "variance.ust", direct_db),
        "ebmv_median.pgm": (outdir / "enh_ebmv" / "median.ust", envelope_db),
    }
    for name, (path, convert) in panels.items():
        image, _ = load_image(path)
        write_pgm(outdir / name, convert(image, dr))

    status = run_metrics(config, config_path, ebmv_path, labels,
                         outdir / "report.json")
    _write_manifest(outdir, "demo", config, [config_path], config.seed)
    return status


# ------------------------------------------------------------- wiring

def build_parser():
    parser = argparse.ArgumentParser(
        prog="pwvar",
        description="Plane-wave ultrasound reconstruction and "
                    "variance-based despeckling.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate",
                       help="synthesize phantom + channel data")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--out", required=True,
                   help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("beamform", help="channel data -> RF image")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-i", "--input", required=True,
                   help="channel data bundle (channels.ust)")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--method", choices=("das", "ebmv"), required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction,
                   default=True,
                   help="scale the image to peak 1 (default on)")
    p.add_argument("--backend", choices=("compiled", "fallback"),
                   help="force a kernel backend (default: best available)")
    p.set_defaults(func=_cmd_beamform)

    p = sub.add_parser("enhance",
                       help="RF image -> posterior samples, variance, median")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--prior-map",
                   help="image file with per-pixel prior variance "
                        "(overrides the config denoiser)")
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("metrics", help="evaluate configured image metrics")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--labels", help="segmentation bundle for label regions")
    p.add_argument("-o", "--out", required=True, help="report JSON path")
    p.add_argument("--lenient", action="store_true",
                   help="exit 0 even when some metrics fail")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("render", help="image file -> 8-bit PGM")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--mode", choices=("envelope", "direct"),
                   default="envelope",
                   help="envelope-detect RF first, or log-compress as is")
    p.add_argument("--dynamic-range", type=float, default=60.0)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("demo",
                       help="full pipeline on the packaged example scene")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_demo)
    return parser


def _cmd_simulate(args):
    config = load_config(args.config)
    run_simulate(config, args.config, args.out)
    return 0


def _cmd_beamform(args):
    config = load_config(args.config)
    run_beamform(config, args.config, args.input, args.out, args.method,
                 threads=args.threads, normalize=args.normalize,
                 backend=args.backend)
    return 0


def _cmd_enhance(args):
    config = load_config(args.config)
    run_enhance(config, args.config, args.input, args.out,
                threads=args.threads, prior_map=args.prior_map)
    return 0


def _cmd_metrics(args):
    config = load_config(args.config)
    return run_metrics(config, args.config, args.input, args.labels,
                       args.out, lenient=args.lenient)


def _cmd_render(args):
    image, _ = load_image(args.input)
    convert = envelope_db if args.mode == "envelope" else direct_db
    write_pgm(args.out, convert(image, args.dynamic_range))
    return 0


def _cmd_demo(args):
    ref = resources.files("pwvar").joinpath("data/ec_demo.yaml")
    with resources.as_file(ref) as path:
        config = load_config(path)
        return run_demo(config, path, args.out, threads=args.threads)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, NumericsError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DenoiserError as exc:
        print(f"denoiser error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
