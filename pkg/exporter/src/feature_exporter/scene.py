"""Synthetic scene definition and construction.

A scene is a fixed set of 3D landmarks, each carrying a distinct 384-dim
unit "signature" descriptor, plus a camera-to-world pose path. Descriptor
observations are the signature plus seeded Gaussian noise, so the data has
a known-correct association and trajectory.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .formats import DEFAULT_DEPTH_SCALE, DESCRIPTOR_DIM


class SceneError(Exception):
    pass


class EmptyScene(SceneError):
    pass


@dataclass
class Intrinsics:
    fx: float = 525.0
    fy: float = 525.0
    cx: float = 319.5
    cy: float = 239.5
    width: int = 640
    height: int = 480

    def to_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}


@dataclass
class SyntheticScene:
    landmarks: np.ndarray       # (M, 3) world positions
    signatures: np.ndarray      # (M, 384) unit descriptors
    path: list                  # [(timestamp, t(3,), q_xyzw(4,)), ...] cam-to-world
    intrinsics: Intrinsics = field(default_factory=Intrinsics)
    noise_sigma: float = 0.0
    seed: int = 0
    depth_scale: float = DEFAULT_DEPTH_SCALE

    def validate(self):
        if len(self.landmarks) == 0 or len(self.path) == 0:
            raise EmptyScene("scene needs at least one landmark and one pose")
        if self.noise_sigma > 0 and len(self.signatures) > 1:
            d = np.linalg.norm(
                self.signatures[:, None] - self.signatures[None, :], axis=2)
            np.fill_diagonal(d, np.inf)
            if d.min() <= 10.0 * self.noise_sigma:
                raise SceneError(
                    f"signature min distance {d.min():.4f} <= "
                    f"10 * noise_sigma {self.noise_sigma}")


def smooth_path(n_poses, rate_hz=30.0):
    """Gentle sinusoidal translation with small rotations, looking down +z."""
    rows = []
    for i in range(n_poses):
        s = i / max(n_poses - 1, 1)
        t = np.array([0.4 * np.sin(2 * np.pi * s),
                      0.15 * np.sin(4 * np.pi * s),
                      0.3 * s])
        q = Rotation.from_euler(
            "yxz", [0.06 * np.sin(2 * np.pi * s),
                    0.04 * np.cos(2 * np.pi * s) - 0.04,
                    0.02 * np.sin(4 * np.pi * s)]).as_quat()
        rows.append((i / rate_hz, t, q))
    return rows


def make_scene(n_landmarks=200, n_poses=50, noise_sigma=0.01, seed=0,
               intrinsics=None):
    rng = np.random.default_rng(seed)
    landmarks = np.stack([
        rng.uniform(-2.0, 2.0, n_landmarks),
        rng.uniform(-1.5, 1.5, n_landmarks),
        rng.uniform(2.5, 6.0, n_landmarks),
    ], axis=1)
    sig = rng.standard_normal((n_landmarks, DESCRIPTOR_DIM))
    sig /= np.linalg.norm(sig, axis=1, keepdims=True)
    scene = SyntheticScene(landmarks, sig, smooth_path(n_poses),
                           intrinsics or Intrinsics(), noise_sigma, seed)
    scene.validate()
    return scene


def scene_from_config(path):
    """Build a scene from a JSON config file.

    Keys: n_landmarks, n_poses, noise_sigma, seed, and optionally an
    "intrinsics" dict; explicit "landmarks" (list of [x,y,z]) and "path"
    (list of [timestamp, tx,ty,tz, qx,qy,qz,qw]) override the generated
    ones.
    """
    cfg = json.loads(Path(path).read_text())
    intr = Intrinsics(**cfg["intrinsics"]) if "intrinsics" in cfg else None
    scene = make_scene(n_landmarks=int(cfg.get("n_landmarks", 200)),
                       n_poses=int(cfg.get("n_poses", 50)),
                       noise_sigma=float(cfg.get("noise_sigma", 0.0)),
                       seed=int(cfg.get("seed", 0)),
                       intrinsics=intr)
    if "landmarks" in cfg:
        pts = np.asarray(cfg["landmarks"], float).reshape(-1, 3)
        rng = np.random.default_rng(scene.seed)
        sig = rng.standard_normal((len(pts), DESCRIPTOR_DIM))
        if len(pts):
            sig /= np.linalg.norm(sig, axis=1, keepdims=True)
        scene.landmarks, scene.signatures = pts, sig
    if "path" in cfg:
        scene.path = [(float(r[0]), np.asarray(r[1:4], float),
                       np.asarray(r[4:8], float)) for r in cfg["path"]]
    scene.validate()
    return scene
