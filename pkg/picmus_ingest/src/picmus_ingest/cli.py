"""Command line converter.

    picmus-ingest convert recording.hdf5 --angle center --out bundle_dir

Exit codes match the imaging pipeline: 0 success, 2 bad arguments or
selection, 3 unreadable or malformed input.
"""

import argparse
import sys

import numpy as np

from .bundle import write_channel_bundle
from .errors import ConfigError, DataError
from .reader import read_picmus


def resolve_angle(record, selection):
    """Angle index from "center" or a decimal index string."""
    if selection == "center":
        return int(np.argmin(np.abs(record.angles)))
    try:
        index = int(selection)
    except ValueError:
        raise ConfigError(
            f"--angle must be an integer or 'center', got {selection!r}"
        ) from None
    if not 0 <= index < record.angle_count:
        raise ConfigError(
            f"angle index {index} out of range 0..{record.angle_count - 1}")
    return index


def convert(h5_path, angle, out_dir, center_frequency=None):
    record = read_picmus(h5_path)
    index = resolve_angle(record, angle)
    f0 = record.center_frequency
    if center_frequency is not None:
        f0 = center_frequency
    if f0 <= 0:
        raise ConfigError(
            "the recording carries no modulation frequency; pass "
            "--center-frequency explicitly")
    # (elements, time) -> (time, elements); values pass through untouched
    # apart from the container's float32 storage
    samples = record.samples[index].T
    return write_channel_bundle(
        out_dir, samples, record.element_x,
        transmit_angle=float(record.angles[index]),
        start_time=record.start_time,
        sampling_frequency=record.sampling_frequency,
        center_frequency=f0,
        sound_speed=record.sound_speed,
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="picmus-ingest",
        description="Convert PICMUS HDF5 recordings to channel bundles.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("convert", help="extract one transmission")
    p.add_argument("input", help="PICMUS HDF5 file")
    p.add_argument("--angle", default="center",
                   help="transmission index, or 'center' for the steering "
                        "angle closest to zero (default)")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--center-frequency", type=float,
                   help="override for RF files that store no modulation "
                        "frequency")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        path = convert(args.input, args.angle, args.out,
                       center_frequency=args.center_frequency)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(path)
    return 0
