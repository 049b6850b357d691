"""Flat binary tensor files plus text sidecars.

Layout (all integers little-endian):

    bytes 0..5   magic b"USTN1\\0"
    u32          rank (1..4)
    u32 * rank   dimensions
    f32 * prod   payload, row-major

A tensor file may be accompanied by a text sidecar at ``<path>.meta``
holding one ``key=value`` pair per line (scalar metadata only; vectors get
their own tensor file).  Keys are written in sorted order so identical data
produces identical bytes.

The composite helpers at the bottom bundle the package's domain objects
into tensor + sidecar pairs; channel data carries its element positions in
a sibling ``<stem>.elements.ust`` tensor.
"""

import os
import struct

import numpy as np

from .core import ChannelData, ImagingGrid, ProbeGeometry, RfImage
from .errors import DataError

MAGIC = b"USTN1\x00"
MAX_RANK = 4

__all__ = [
    "MAGIC",
    "read_sidecar",
    "read_tensor",
    "sidecar_path",
    "write_sidecar",
    "write_tensor",
    "load_channel_data",
    "load_image",
    "load_labels",
    "save_channel_data",
    "save_image",
    "save_labels",
]


def write_tensor(path, array):
    """Write an array as a float32 tensor file."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim < 1 or arr.ndim > MAX_RANK:
        raise DataError(f"tensor rank must be 1..{MAX_RANK}, got {arr.ndim}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_tensor(path):
    """Read a tensor file back as a float32 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:6] != MAGIC:
        raise DataError(f"{path}: bad magic, not a tensor file")
    if len(blob) < 10:
        raise DataError(f"{path}: truncated header")
    (rank,) = struct.unpack_from("<I", blob, 6)
    if rank < 1 or rank > MAX_RANK:
        raise DataError(f"{path}: rank {rank} out of range 1..{MAX_RANK}")
    header_end = 10 + 4 * rank
    if len(blob) < header_end:
        raise DataError(f"{path}: truncated dimension list")
    shape = struct.unpack_from(f"<{rank}I", blob, 10)
    expected = int(np.prod(shape, dtype=np.int64)) * 4
    payload = blob[header_end:]
    if len(payload) != expected:
        raise DataError(
            f"{path}: payload is {len(payload)} bytes, shape {shape} needs {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()


def sidecar_path(path):
    return f"{path}.meta"


def write_sidecar(path, entries):
    """Write scalar metadata for the tensor at `path` (keys sorted)."""
    lines = []
    for key in sorted(entries):
        if "=" in key or "\n" in key or not key:
            raise DataError(f"invalid sidecar key {key!r}")
        value = entries[key]
        if isinstance(value, float):
            value = repr(value)
        value = str(value)
        if "\n" in value:
            raise DataError(f"sidecar value for {key!r} must be a single line")
        lines.append(f"{key}={value}\n")
    with open(sidecar_path(path), "w") as fh:
        fh.write("".join(lines))


def read_sidecar(path):
    """Read `<path>.meta` into a dict of strings; missing file is an error."""
    meta = sidecar_path(path)
    if not os.path.exists(meta):
        raise DataError(f"{meta}: sidecar not found")
    out = {}
    with open(meta) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{meta}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            out[key] = value
    return out


def _require(meta, key, path):
    if key not in meta:
        raise DataError(f"{sidecar_path(path)}: missing key {key!r}")
    return meta[key]


def _float(meta, key, path):
    raw = _require(meta, key, path)
    try:
        return float(raw)
    except ValueError:
        raise DataError(f"{sidecar_path(path)}: {key}={raw!r} is not a number") from None


def _sibling(path, tag):
    stem, ext = os.path.splitext(path)
    return f"{stem}.{tag}{ext or '.ust'}"


# ------------------------------------------------- domain object bundles

def save_channel_data(path, data):
    """Tensor (Nt, Ne) + acquisition sidecar + element-position tensor."""
    write_tensor(path, data.samples)
    write_tensor(_sibling(path, "elements"), data.geometry.element_positions)
    write_sidecar(path, {
        "kind": "channel_data",
        "transmit_angle": float(data.transmit_angle),
        "start_time": float(data.start_time),
        "sampling_frequency": data.geometry.sampling_frequency,
        "center_frequency": data.geometry.center_frequency,
        "sound_speed": data.geometry.sound_speed,
    })


def load_channel_data(path):
    samples = read_tensor(path)
    if samples.ndim != 2:
        raise DataError(f"{path}: channel data must be rank 2, got {samples.ndim}")
    meta = read_sidecar(path)
    elements = read_tensor(_sibling(path, "elements"))
    geometry = ProbeGeometry(
        elements.astype(np.float64),
        center_frequency=_float(meta, "center_frequency", path),
        sampling_frequency=_float(meta, "sampling_frequency", path),
        sound_speed=_float(meta, "sound_speed", path),
    )
    return ChannelData(
        samples.astype(np.float64),
        geometry,
        transmit_angle=_float(meta, "transmit_angle", path),
        start_time=_float(meta, "start_time", path),
    )


def _grid_meta(grid):
    return {
        "grid_x0": float(grid.x[0]),
        "grid_dx": grid.dx,
        "grid_z0": float(grid.z[0]),
        "grid_dz": grid.dz,
    }


def _grid_from_meta(meta, shape, path):
    nz, nx = shape
    x0 = _float(meta, "grid_x0", path)
    dx = _float(meta, "grid_dx", path)
    z0 = _float(meta, "grid_z0", path)
    dz = _float(meta, "grid_dz", path)
    x = x0 + dx * np.arange(nx) if nx > 1 else np.array([x0])
    z = z0 + dz * np.arange(nz) if nz > 1 else np.array([z0])
    return ImagingGrid(x, z)


def save_image(path, image, extra=None):
    """Tensor (Nz, Nx) + sidecar carrying the grid and optional extras."""
    write_tensor(path, image.values)
    meta = {"kind": "image"}
    meta.update(_grid_meta(image.grid))
    if extra:
        meta.update(extra)
    write_sidecar(path, meta)


def load_image(path):
    values = read_tensor(path)
    if values.ndim != 2:
        raise DataError(f"{path}: image must be rank 2, got {values.ndim}")
    meta = read_sidecar(path)
    grid = _grid_from_meta(meta, values.shape, path)
    return RfImage(values.astype(np.float64), grid), meta


def save_labels(path, labels, names, grid):
    """Integer region labels stored as float32, names in the sidecar."""
    write_tensor(path, np.asarray(labels, dtype=np.float64))
    meta = {"kind": "labels"}
    meta.update(_grid_meta(grid))
    for name, value in names.items():
        meta[f"label.{name}"] = int(value)
    write_sidecar(path, meta)


def load_labels(path):
    raw = read_tensor(path)
    meta = read_sidecar(path)
    labels = np.rint(raw).astype(np.int64)
    names = {}
    for key, value in meta.items():
        if key.startswith("label."):
            names[key[len("label."):]] = int(value)
    return labels, names
