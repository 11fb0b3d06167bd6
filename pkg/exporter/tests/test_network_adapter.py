import json

import cv2
import numpy as np
import pytest

from feature_exporter import (ExportError, ModelUnavailable,
                              NetworkAdapterConfig, export_from_network)


def stub_backend(img, pair):
    """Fake network: one keypoint per 16x16 block, deterministic features."""
    h, w = img.shape
    cells = [(i, j) for j in range(0, h // 8, 2) for i in range(0, w // 8, 2)]
    cells = np.array(cells)
    rng = np.random.default_rng(int(img.sum()) % (2 ** 32))
    coarse = rng.standard_normal((len(cells), 256))
    fine = rng.standard_normal((len(cells), 128))
    return cells, coarse, fine


@pytest.fixture
def image_dir(tmp_path):
    d = tmp_path / "imgs"
    d.mkdir()
    rng = np.random.default_rng(0)
    for i in range(3):
        cv2.imwrite(str(d / f"{i:04d}.png"),
                    rng.integers(0, 256, (480, 640), np.uint8))
    return d


class TestConfig:
    def test_resolution_must_be_multiple_of_8(self):
        with pytest.raises(ExportError):
            NetworkAdapterConfig(width=641, height=480)

    def test_default_ok(self):
        cfg = NetworkAdapterConfig()
        assert cfg.channel_duplicate


class TestExport:
    def test_no_model_raises(self, image_dir, tmp_path):
        with pytest.raises(ModelUnavailable):
            export_from_network(image_dir, NetworkAdapterConfig(),
                                tmp_path / "out")

    def test_descriptor_dim_and_grid_coords(self, image_dir, tmp_path):
        import struct
        out = export_from_network(image_dir, NetworkAdapterConfig(),
                                  tmp_path / "out", backend=stub_backend)
        files = sorted((out / "features").glob("*.rwtf"))
        assert len(files) == 3
        for f in files:
            data = f.read_bytes()
            magic, version, n, dim = struct.unpack_from("<4sIII", data)
            assert magic == b"RWTF" and version == 1 and dim == 384
            assert 0 < n <= 80 * 60
            rec = np.frombuffer(data, "<f4", count=n * 386,
                                offset=16).reshape(n, 386)
            assert np.all(rec[:, :2] % 8 == 0)

    def test_pairing_mode_in_manifest(self, image_dir, tmp_path):
        out = export_from_network(
            image_dir, NetworkAdapterConfig(channel_duplicate=False),
            tmp_path / "out", backend=stub_backend)
        m = json.loads((out / "export_manifest.json").read_text())
        modes = [f["pairing"] for f in m["frames"]]
        assert modes == ["consecutive", "consecutive", "self"]

    def test_oversized_backend_output_rejected(self, image_dir, tmp_path):
        def too_many(img, pair):
            n = 80 * 60 + 1
            return (np.zeros((n, 2), int), np.zeros((n, 256)),
                    np.zeros((n, 128)))
        with pytest.raises(ExportError):
            export_from_network(image_dir, NetworkAdapterConfig(),
                                tmp_path / "out", backend=too_many)

    def test_empty_dir(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(ExportError):
            export_from_network(tmp_path / "empty", NetworkAdapterConfig(),
                                tmp_path / "out", backend=stub_backend)
