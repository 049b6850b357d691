"""Write channel bundles in the imaging pipeline's container format.

The format is a byte-level contract, re-implemented here on purpose so
this converter has no code dependency on the pipeline package:

    bytes 0..5   magic b"USTN1\\0"
    u32 LE       rank (1..4)
    u32 LE each  dimensions
    f32 LE       payload, row-major

with a text sidecar ``<path>.meta`` of sorted ``key=value`` lines.  A
channel bundle is ``<stem>.ust`` holding (time, elements) samples,
``<stem>.elements.ust`` holding element x positions, and the sidecar
carrying the acquisition scalars.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"USTN1\x00"
MAX_RANK = 4


def write_tensor(path, array):
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim < 1 or arr.ndim > MAX_RANK:
        raise DataError(f"tensor rank must be 1..{MAX_RANK}, got {arr.ndim}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def write_sidecar(path, entries):
    lines = []
    for key in sorted(entries):
        value = entries[key]
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}={value}\n")
    Path(f"{path}.meta").write_text("".join(lines))


def write_channel_bundle(out_dir, samples, element_x, *, transmit_angle,
                         start_time, sampling_frequency, center_frequency,
                         sound_speed, stem="channels"):
    """Emit <stem>.ust + <stem>.elements.ust + <stem>.ust.meta.

    `samples` must already be (time, elements).  Returns the main tensor
    path.
    """
    samples = np.asarray(samples)
    element_x = np.asarray(element_x)
    if samples.ndim != 2:
        raise DataError(f"channel samples must be rank 2, got {samples.ndim}")
    if element_x.ndim != 1 or element_x.size != samples.shape[1]:
        raise DataError(
            f"element positions ({element_x.shape}) do not match the "
            f"{samples.shape[1]} channel columns")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    main = out_dir / f"{stem}.ust"
    write_tensor(main, samples)
    write_tensor(out_dir / f"{stem}.elements.ust", element_x)
    write_sidecar(main, {
        "kind": "channel_data",
        "transmit_angle": float(transmit_angle),
        "start_time": float(start_time),
        "sampling_frequency": float(sampling_frequency),
        "center_frequency": float(center_frequency),
        "sound_speed": float(sound_speed),
    })
    return main
