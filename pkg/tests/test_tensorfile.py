import struct

import numpy as np
import pytest

from pwvar import ChannelData, DataError, ImagingGrid, ProbeGeometry, RfImage
from pwvar import tensorfile as tf


def test_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(5)
    for shape in [(7,), (3, 4), (2, 3, 4), (2, 2, 2, 2)]:
        arr = rng.standard_normal(shape).astype(np.float32)
        path = tmp_path / "t.ust"
        tf.write_tensor(path, arr)
        back = tf.read_tensor(path)
        assert back.dtype == np.float32
        assert back.shape == arr.shape
        assert back.tobytes() == arr.tobytes()


def test_header_layout_is_frozen(tmp_path):
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    path = tmp_path / "t.ust"
    tf.write_tensor(path, arr)
    blob = path.read_bytes()
    # independently assembled expectation
    expected = b"USTN1\x00" + struct.pack("<I", 2) + struct.pack("<2I", 2, 3)
    expected += b"".join(struct.pack("<f", v) for v in range(6))
    assert blob == expected


def test_write_casts_to_float32(tmp_path):
    path = tmp_path / "t.ust"
    tf.write_tensor(path, np.array([1.0, 1/3], dtype=np.float64))
    back = tf.read_tensor(path)
    assert back[1] == np.float32(1/3)


def test_malformed_files_raise(tmp_path):
    path = tmp_path / "t.ust"
    tf.write_tensor(path, np.zeros((4, 4)))
    blob = path.read_bytes()

    bad = tmp_path / "bad.ust"
    bad.write_bytes(b"NOPE" + blob[4:])
    with pytest.raises(DataError, match="magic"):
        tf.read_tensor(bad)

    bad.write_bytes(blob[:-3])  # truncated payload
    with pytest.raises(DataError, match="payload"):
        tf.read_tensor(bad)

    bad.write_bytes(blob + b"\x00\x00\x00\x00")  # trailing junk
    with pytest.raises(DataError, match="payload"):
        tf.read_tensor(bad)

    bad.write_bytes(blob[:6] + struct.pack("<I", 9) + blob[10:])
    with pytest.raises(DataError, match="rank"):
        tf.read_tensor(bad)

    with pytest.raises(DataError):
        tf.write_tensor(tmp_path / "t5.ust", np.zeros((1, 1, 1, 1, 1)))


def test_sidecar_round_trip(tmp_path):
    path = tmp_path / "t.ust"
    tf.write_tensor(path, np.zeros(3))
    tf.write_sidecar(path, {"beta": 0.1, "alpha": -3, "name": "demo"})
    text = (tmp_path / "t.ust.meta").read_text()
    assert text == "alpha=-3\nbeta=0.1\nname=demo\n"  # sorted keys
    meta = tf.read_sidecar(path)
    assert float(meta["beta"]) == 0.1
    assert meta["name"] == "demo"

    with pytest.raises(DataError):
        tf.read_sidecar(tmp_path / "missing.ust")
    with pytest.raises(DataError):
        tf.write_sidecar(path, {"a=b": 1})


def test_channel_data_bundle(tmp_path):
    probe = ProbeGeometry(np.linspace(-5e-3, 5e-3, 6), 5e6, 2e7, 1500.0)
    rng = np.random.default_rng(2)
    data = ChannelData(rng.standard_normal((40, 6)).astype(np.float32),
                       probe, transmit_angle=0.1, start_time=2e-6)
    path = tmp_path / "chan.ust"
    tf.save_channel_data(path, data)
    assert (tmp_path / "chan.elements.ust").exists()
    back = tf.load_channel_data(path)
    assert np.array_equal(back.samples, data.samples)
    assert back.transmit_angle == 0.1
    assert back.start_time == 2e-6
    assert back.geometry.sound_speed == 1500.0
    assert np.allclose(back.geometry.element_positions,
                       probe.element_positions, atol=1e-9)


def test_image_bundle(tmp_path):
    grid = ImagingGrid.regular(-0.01, 0.01, 5, 0.02, 0.04, 9)
    img = RfImage(np.random.default_rng(0).standard_normal((9, 5)).astype(np.float32), grid)
    path = tmp_path / "img.ust"
    tf.save_image(path, img, extra={"stage": "beamform"})
    back, meta = tf.load_image(path)
    assert meta["stage"] == "beamform"
    assert np.array_equal(back.values, img.values)
    assert np.allclose(back.grid.x, grid.x, atol=1e-12)
    assert np.allclose(back.grid.z, grid.z, atol=1e-12)


def test_labels_bundle(tmp_path):
    grid = ImagingGrid.regular(-0.01, 0.01, 4, 0.02, 0.04, 4)
    labels = np.array([[0, 0, 1, 1]] * 4)
    path = tmp_path / "labels.ust"
    tf.save_labels(path, labels, {"background": 0, "cyst": 1}, grid)
    back, names = tf.load_labels(path)
    assert np.array_equal(back, labels)
    assert names == {"background": 0, "cyst": 1}
