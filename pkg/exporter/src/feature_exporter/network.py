"""Adapter that runs a dense-matching network to produce RWTF files.

The network is treated as a black box with two stages: a coarse stage that
yields one 256-dim feature per 8x8 image cell, and a fine stage that yields
a 128-dim feature per selected cell. Descriptors are the raw concatenation
(the consumer normalizes). Keypoints sit at cell origins, so coordinates on
the self-image side are multiples of 8.

Frames can be paired with themselves (channel duplication) or with the
next frame in the sequence; the mode used is recorded in the output
manifest. When no model backend is available the export fails with
ModelUnavailable instead of writing partial output.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .formats import DESCRIPTOR_DIM, write_rwtf

COARSE_DIM = 256
FINE_DIM = 128
CELL = 8

IMAGE_EXTS = (".png", ".jpg", ".jpeg")


class ExportError(Exception):
    pass


class ModelUnavailable(ExportError):
    pass


@dataclass
class NetworkAdapterConfig:
    model: str = "default"
    width: int = 640
    height: int = 480
    channel_duplicate: bool = True   # pair each frame with itself
    # when channel_duplicate is False, pair frame i with frame i+1

    def __post_init__(self):
        if self.width % CELL or self.height % CELL:
            raise ExportError(
                f"resolution {self.width}x{self.height} not a multiple of "
                f"{CELL}")


def load_backend(cfg: NetworkAdapterConfig):
    """Resolve the model reference to a callable backend.

    A backend maps (image_a, image_b) to (cells (n,2) int grid coords,
    coarse (n,256), fine (n,128)). No pretrained model ships with this
    package, so without an injected backend this always fails.
    """
    raise ModelUnavailable(
        f"no dense-matching model available for reference "
        f"{cfg.model!r}; install one and pass it as a backend")


def list_sequence_images(dataset_dir):
    """Collect image files from DIR or DIR/rgb, sorted by name."""
    root = Path(dataset_dir)
    rgb = root / "rgb"
    base = rgb if rgb.is_dir() else root
    images = sorted(p for p in base.iterdir()
                    if p.suffix.lower() in IMAGE_EXTS)
    if not images:
        raise ExportError(f"no images found under {base}")
    return images


def export_from_network(dataset_dir, cfg: NetworkAdapterConfig, out_dir,
                        backend=None):
    """Run the network per frame and write RWTF files plus a manifest."""
    if backend is None:
        backend = load_backend(cfg)
    images = list_sequence_images(dataset_dir)
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    max_kp = (cfg.width // CELL) * (cfg.height // CELL)
    frames = []
    for i, path in enumerate(images):
        img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
        if img is None:
            raise ExportError(f"unreadable image {path}")
        img = cv2.resize(img, (cfg.width, cfg.height))
        if cfg.channel_duplicate or i + 1 >= len(images):
            pair = img
            mode = "self"
        else:
            pair = cv2.imread(str(images[i + 1]), cv2.IMREAD_GRAYSCALE)
            pair = cv2.resize(pair, (cfg.width, cfg.height))
            mode = "consecutive"
        cells, coarse, fine = backend(img, pair)
        cells = np.asarray(cells, int).reshape(-1, 2)
        coarse = np.asarray(coarse, float).reshape(len(cells), -1)
        fine = np.asarray(fine, float).reshape(len(cells), -1)
        if coarse.shape[1] != COARSE_DIM or fine.shape[1] != FINE_DIM:
            raise ExportError(
                f"backend returned dims {coarse.shape[1]}+{fine.shape[1]}, "
                f"need {COARSE_DIM}+{FINE_DIM}")
        if len(cells) > max_kp:
            raise ExportError(
                f"backend returned {len(cells)} keypoints for a "
                f"{cfg.width}x{cfg.height} frame (max {max_kp})")
        kps = cells.astype(np.float64) * CELL
        desc = np.concatenate([coarse, fine], axis=1)
        assert desc.shape[1] == DESCRIPTOR_DIM
        stem = f"{i:06d}"
        write_rwtf(feat_dir / f"{stem}.rwtf", kps, desc)
        frames.append({"id": i, "stem": stem, "source": path.name,
                       "pairing": mode})
    manifest = {
        "type": "network",
        "model": cfg.model,
        "resolution": [cfg.width, cfg.height],
        "channel_duplicate": cfg.channel_duplicate,
        "frames": frames,
    }
    (out_dir / "export_manifest.json").write_text(
        json.dumps(manifest, indent=2))
    return out_dir
