"""Converter tests against synthetic PICMUS files.

The output bundles are checked with a local struct-level parser rather
than the imaging package's reader: the byte layout is the contract.
"""

import importlib.util
import os
import struct
import subprocess
import sys
from pathlib import Path

import h5py
import numpy as np
import pytest

from picmus_ingest.cli import main

EC_PATH = os.environ.get("PICMUS_EC", "")


def make_recording(path, angles=5, ne=8, nt=16, iq=False, modulation=5.0e6,
                   dtype=np.float32, drop=()):
    rng = np.random.default_rng(42)
    real = rng.standard_normal((angles, ne, nt)).astype(dtype)
    imag = (rng.standard_normal(real.shape).astype(dtype) if iq
            else np.zeros_like(real))
    steering = np.linspace(-0.1, 0.1, angles)
    probe = np.zeros((3, ne))
    probe[0] = (np.arange(ne) - (ne - 1) / 2.0) * 3.0e-4
    entries = {
        "data/real": real,
        "data/imag": imag,
        "angles": steering,
        "probe_geometry": probe,
        "sampling_frequency": np.float64(2.0e7),
        "sound_speed": np.float64(1540.0),
        "initial_time": np.float64(1.0e-6),
        "modulation_frequency": np.float64(modulation),
    }
    with h5py.File(path, "w") as fh:
        group = fh.create_group("US/US_DATASET0000")
        for name, value in entries.items():
            if name not in drop:
                group[name] = value
    return real, steering, probe


def parse_tensor(path):
    blob = Path(path).read_bytes()
    assert blob[:6] == b"USTN1\x00", "bad magic"
    (rank,) = struct.unpack_from("<I", blob, 6)
    shape = struct.unpack_from(f"<{rank}I", blob, 10)
    payload = np.frombuffer(blob, dtype="<f4", offset=10 + 4 * rank)
    return payload.reshape(shape)


def parse_sidecar(path):
    out = {}
    for line in Path(f"{path}.meta").read_text().splitlines():
        key, _, value = line.partition("=")
        out[key] = value
    return out


class TestConvert:
    def test_center_angle_emits_exactly_one_bundle(self, tmp_path):
        make_recording(tmp_path / "rec.h5")
        out = tmp_path / "out"
        assert main(["convert", str(tmp_path / "rec.h5"), "--angle",
                     "center", "-o", str(out)]) == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["channels.elements.ust", "channels.ust",
                         "channels.ust.meta"]

    def test_round_trip_bitwise_for_float32_source(self, tmp_path):
        real, steering, probe = make_recording(tmp_path / "rec.h5")
        out = tmp_path / "out"
        main(["convert", str(tmp_path / "rec.h5"), "-o", str(out)])
        samples = parse_tensor(out / "channels.ust")
        # center of the 5 steering angles is index 2, transposed to
        # (time, elements)
        assert np.array_equal(samples, real[2].T)
        elements = parse_tensor(out / "channels.elements.ust")
        assert np.array_equal(elements, probe[0].astype(np.float32))
        meta = parse_sidecar(out / "channels.ust")
        assert meta["kind"] == "channel_data"
        assert float(meta["transmit_angle"]) == steering[2]
        assert float(meta["sampling_frequency"]) == 2.0e7
        assert float(meta["center_frequency"]) == 5.0e6
        assert float(meta["sound_speed"]) == 1540.0
        assert float(meta["start_time"]) == 1.0e-6

    def test_float64_source_lands_within_float32_cast(self, tmp_path):
        real, _, _ = make_recording(tmp_path / "rec.h5", dtype=np.float64)
        out = tmp_path / "out"
        main(["convert", str(tmp_path / "rec.h5"), "--angle", "0",
              "-o", str(out)])
        samples = parse_tensor(out / "channels.ust")
        assert np.array_equal(samples, real[0].T.astype(np.float32))

    def test_explicit_angle_index(self, tmp_path):
        real, steering, _ = make_recording(tmp_path / "rec.h5")
        out = tmp_path / "out"
        assert main(["convert", str(tmp_path / "rec.h5"), "--angle", "4",
                     "-o", str(out)]) == 0
        assert np.array_equal(parse_tensor(out / "channels.ust"), real[4].T)
        meta = parse_sidecar(out / "channels.ust")
        assert float(meta["transmit_angle"]) == steering[4]

    def test_conversion_is_idempotent(self, tmp_path):
        make_recording(tmp_path / "rec.h5")
        for name in ("a", "b"):
            main(["convert", str(tmp_path / "rec.h5"), "-o",
                  str(tmp_path / name)])
        for name in ("channels.ust", "channels.elements.ust",
                     "channels.ust.meta"):
            assert ((tmp_path / "a" / name).read_bytes()
                    == (tmp_path / "b" / name).read_bytes())

    def test_transposed_probe_geometry_accepted(self, tmp_path):
        path = tmp_path / "rec.h5"
        real, _, probe = make_recording(path)
        with h5py.File(path, "r+") as fh:
            group = fh["US/US_DATASET0000"]
            del group["probe_geometry"]
            group["probe_geometry"] = probe.T
        out = tmp_path / "out"
        assert main(["convert", str(path), "-o", str(out)]) == 0
        assert np.array_equal(parse_tensor(out / "channels.elements.ust"),
                              probe[0].astype(np.float32))


class TestErrors:
    def test_angle_out_of_range_names_.valid_range = None

    def test_angle_out_of_range_names_valid_range(self, tmp_path, capsys):
        make_recording(tmp_path / "rec.h5")
        rc = main(["convert", str(tmp_path / "rec.h5"), "--angle", "99",
                   "-o", str(tmp_path / "out")])
        assert rc == 2
        assert "0..4" in capsys.readouterr().err

    def test_missing_dataset_names_its_path(self, tmp_path, capsys):
        make_recording(tmp_path / "rec.h5", drop=("angles",))
        rc = main(["convert", str(tmp_path / "rec.h5"),
                   "-o", str(tmp_path / "out")])
        assert rc == 3
        assert "US/US_DATASET0000/angles" in capsys.readouterr().err

    def test_iq_recording_rejected(self, tmp_path, capsys):
        make_recording(tmp_path / "rec.h5", iq=True)
        rc = main(["convert", str(tmp_path / "rec.h5"),
                   "-o", str(tmp_path / "out")])
        assert rc == 3
        assert "IQ" in capsys.readouterr().err

    def test_unreadable_file(self, tmp_path):
        assert main(["convert", str(tmp_path / "nothing.h5"),
                     "-o", str(tmp_path / "out")]) == 3

    def test_missing_modulation_needs_flag(self, tmp_path, capsys):
        make_recording(tmp_path / "rec.h5", modulation=0.0)
        rc = main(["convert", str(tmp_path / "rec.h5"),
                   "-o", str(tmp_path / "out")])
        assert rc == 2
        assert "center-frequency" in capsys.readouterr().err
        assert main(["convert", str(tmp_path / "rec.h5"),
                     "-o", str(tmp_path / "out"),
                     "--center-frequency", "5.2e6"]) == 0
        meta = parse_sidecar(tmp_path / "out" / "channels.ust")
        assert float(meta["center_frequency"]) == 5.2e6


PIPELINE_CONFIG = """\
seed: 3
probe:
  element_count: 2
  pitch: 3.0e-4
  center_frequency: 5.0e+6
  sampling_frequency: 2.0e+7
grid: {x0: -1.0e-3, x1: 1.0e-3, nx: 9, z0: 2.0e-3, z1: 4.0e-3, nz: 11}
"""


@pytest.mark.skipif(importlib.util.find_spec("pwvar") is None,
                    reason="imaging pipeline not installed")
def test_pipeline_reads_converted_bundle(tmp_path):
    """Interop by subprocess only: the packages stay import-independent."""
    make_recording(tmp_path / "rec.h5", ne=8, nt=64)
    out = tmp_path / "bundle"
    assert main(["convert", str(tmp_path / "rec.h5"), "-o", str(out)]) == 0
    config = tmp_path / "bf.yaml"
    config.write_text(PIPELINE_CONFIG)
    proc = subprocess.run(
        [sys.executable, "-m", "pwvar", "beamform", "-c", str(config),
         "-i", str(out / "channels.ust"), "-o", str(tmp_path / "bf"),
         "--method", "das"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "bf" / "das.ust").exists()


EC_CONFIG = """\
seed: 12
probe:
  element_count: 2
  pitch: 3.0e-4
  center_frequency: 5.0e+6
  sampling_frequency: 2.0e+7
grid:
  x0: -1.8e-2
  x1: 1.8e-2
  nx: 201
  z0: 5.0e-3
  z1: 4.5e-2
  nz: 301
beamform:
  subarray_length: 64
  f_number: 1.75
enhance:
  sample_count: 10
  steps: 50
  measurement_noise: 5.0e-2
  denoiser: {kind: wiener, prior_variance: 1.0}
render:
  dynamic_range: 60.0
"""


@pytest.mark.skipif(not EC_PATH, reason="set PICMUS_EC to the EC HDF5 file")
def test_ec_dataset_smoke(tmp_path):
    """Full pipeline on the real recording: runs and emits all panels."""
    out = tmp_path / "bundle"
    assert main(["convert", EC_PATH, "--angle", "center",
                 "-o", str(out)]) == 0
    config = tmp_path / "ec.yaml"
    config.write_text(EC_CONFIG)

    def run(*args):
        proc = subprocess.run([sys.executable, "-m", "pwvar", *args],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr

    channels = str(out / "channels.ust")
    run("beamform", "-c", str(config), "-i", channels,
        "-o", str(tmp_path / "das"), "--method", "das", "--threads", "2")
    run("beamform", "-c", str(config), "-i", channels,
        "-o", str(tmp_path / "ebmv"), "--method", "ebmv", "--threads", "2")
    run("enhance", "-c", str(config), "-i", str(tmp_path / "das" / "das.ust"),
        "-o", str(tmp_path / "enh_das"), "--threads", "2")
    run("enhance", "-c", str(config),
        "-i", str(tmp_path / "ebmv" / "ebmv.ust"),
        "-o", str(tmp_path / "enh_ebmv"), "--threads", "2")
    panels = {
        "das.pgm": (tmp_path / "das" / "das.ust", "envelope"),
        "ebmv.pgm": (tmp_path / "ebmv" / "ebmv.ust", "envelope"),
        "das_var.pgm": (tmp_path / "enh_das" / "variance.ust", "direct"),
        "ebmv_var.pgm": (tmp_path / "enh_ebmv" / "variance.ust", "direct"),
        "ebmv_median.pgm": (tmp_path / "enh_ebmv" / "median.ust", "envelope"),
    }
    for name, (source, mode) in panels.items():
        run("render", "-i", str(source), "-o", str(tmp_path / name),
            "--mode", mode)
        assert (tmp_path / name).stat().st_size > 0
