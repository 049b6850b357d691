"""Read PICMUS-style HDF5 recordings.

The challenge archives keep everything under ``US/<dataset id>``:

    data/real, data/imag   (angles, elements, time samples)
    angles                  transmit steering angles, radians
    probe_geometry          element coordinates, (3, Ne) rows x/y/z
    sampling_frequency, sound_speed, initial_time, modulation_frequency

Only RF recordings convert; demodulated IQ data would need remodulation,
which is out of scope for a pass-through tool.
"""

from dataclasses import dataclass

import h5py
import numpy as np

from .errors import DataError

ROOT_GROUP = "US"


@dataclass(frozen=True)
class PicmusRecord:
    """One plane-wave acquisition set, shapes already cross-checked."""

    dataset_id: str
    samples: np.ndarray    # (Na, Ne, Nt) RF traces
    angles: np.ndarray     # (Na,) radians
    element_x: np.ndarray  # (Ne,) lateral element positions, meters
    sampling_frequency: float
    center_frequency: float  # 0.0 when the file carries no modulation
    sound_speed: float
    start_time: float

    @property
    def angle_count(self):
        return int(self.angles.size)


def _fetch(group, name, prefix):
    if name not in group:
        raise DataError(f"missing dataset {prefix}/{name}")
    return group[name]


def _scalar(group, name, prefix):
    value = np.asarray(_fetch(group, name, prefix)[()])
    if value.size != 1:
        raise DataError(f"{prefix}/{name} must be a scalar")
    return float(value.reshape(()))


def _element_positions(raw, ne, where):
    """Lateral element coordinates from the file's geometry array.

    PICMUS stores (3, Ne) coordinate rows; transposed exports and plain
    x-vectors also show up in the wild, so all three layouts are taken.
    """
    arr = np.asarray(raw)
    if arr.ndim == 1 and arr.size == ne:
        return arr
    if arr.ndim == 2 and arr.shape[0] == 3 and arr.shape[1] == ne:
        return arr[0]
    if arr.ndim == 2 and arr.shape == (ne, 3):
        return arr[:, 0]
    raise DataError(
        f"{where}: expected (3, {ne}), ({ne}, 3) or ({ne},) probe "
        f"geometry, got {arr.shape}")


def read_picmus(path):
    try:
        fh = h5py.File(path, "r")
    except (OSError, IOError) as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        if ROOT_GROUP not in fh:
            raise DataError(f"missing group {ROOT_GROUP}")
        root = fh[ROOT_GROUP]
        names = sorted(root.keys())
        if not names:
            raise DataError(f"group {ROOT_GROUP} holds no dataset")
        dataset_id = names[0]
        prefix = f"{ROOT_GROUP}/{dataset_id}"
        group = root[dataset_id]

        data = _fetch(group, "data", prefix)
        real = np.asarray(_fetch(data, "real", f"{prefix}/data"))
        imag = np.asarray(_fetch(data, "imag", f"{prefix}/data"))
        if real.ndim != 3:
            raise DataError(
                f"{prefix}/data/real must have rank 3 "
                f"(angles, elements, time), got rank {real.ndim}")
        if imag.shape != real.shape:
            raise DataError(f"{prefix}/data/imag shape {imag.shape} does "
                            f"not match real {real.shape}")
        if np.any(imag != 0):
            raise DataError(
                f"{prefix}/data/imag is nonzero: this is a demodulated IQ "
                f"recording, only RF data converts")

        angles = np.asarray(_fetch(group, "angles", prefix), dtype=np.float64)
        angles = angles.reshape(-1)
        if angles.size != real.shape[0]:
            raise DataError(
                f"{prefix}/angles has {angles.size} entries but data holds "
                f"{real.shape[0]} transmissions")

        element_x = _element_positions(
            _fetch(group, "probe_geometry", prefix),
            real.shape[1], f"{prefix}/probe_geometry")

        return PicmusRecord(
            dataset_id=dataset_id,
            samples=real,
            angles=angles,
            element_x=element_x,
            sampling_frequency=_scalar(group, "sampling_frequency", prefix),
            center_frequency=_scalar(group, "modulation_frequency", prefix),
            sound_speed=_scalar(group, "sound_speed", prefix),
            start_time=_scalar(group, "initial_time", prefix),
        )
