"""Synthetic scene generation for end-to-end oracles.

Produces datasets in the same on-disk layout the feature exporter emits:
RWTF feature files plus per-frame depth and landmark-id sidecars, a TUM
ground-truth trajectory and a sequence manifest. Landmark descriptors are
distinct unit 384-vectors with optional Gaussian noise; keypoints are the
exact pinhole projections, so a correct pipeline recovers the trajectory
almost exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .dataset_io import (DEFAULT_DEPTH_SCALE, DESCRIPTOR_DIM, CameraIntrinsics,
                         FrameFeatures, Pose, write_feature_file,
                         write_trajectory)
from .geometry import SE3

DEFAULT_INTRINSICS = CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480)


@dataclass
class SyntheticScene:
    landmarks: np.ndarray       # (M, 3) world positions
    signatures: np.ndarray      # (M, 384) unit descriptors
    path: list                  # camera-to-world Pose per frame
    intrinsics: CameraIntrinsics = field(
        default_factory=lambda: DEFAULT_INTRINSICS)
    noise_sigma: float = 0.0
    seed: int = 0
    depth_scale: float = DEFAULT_DEPTH_SCALE


def make_smooth_path(n_poses, rate_hz=30.0):
    """Gentle translating/rotating camera path looking down +z."""
    poses = []
    for i in range(n_poses):
        t = i / max(n_poses - 1, 1)
        pos = np.array([0.4 * np.sin(2 * np.pi * t),
                        0.15 * np.sin(4 * np.pi * t),
                        0.3 * t])
        rot = Rotation.from_euler(
            "yxz", [0.06 * np.sin(2 * np.pi * t),
                    0.04 * np.cos(2 * np.pi * t) - 0.04,
                    0.02 * np.sin(4 * np.pi * t)])
        poses.append(Pose(i / rate_hz, pos, rot.as_quat()))
    return poses


def random_signatures(n, rng, constant_fine=False):
    """Distinct unit descriptors; optionally a shared fine slice."""
    sig = rng.standard_normal((n, DESCRIPTOR_DIM))
    if constant_fine:
        sig[:, 256:] = rng.standard_normal(128)
    sig /= np.linalg.norm(sig, axis=1, keepdims=True)
    return sig


def make_scene(n_landmarks=200, n_poses=50, noise_sigma=0.01, seed=0,
               intrinsics=None, constant_fine=False):
    rng = np.random.default_rng(seed)
    landmarks = np.stack([
        rng.uniform(-2.0, 2.0, n_landmarks),
        rng.uniform(-1.5, 1.5, n_landmarks),
        rng.uniform(2.5, 6.0, n_landmarks),
    ], axis=1)
    signatures = random_signatures(n_landmarks, rng,
                                   constant_fine=constant_fine)
    return SyntheticScene(landmarks, signatures, make_smooth_path(n_poses),
                          intrinsics or DEFAULT_INTRINSICS, noise_sigma, seed)


def render_frame(scene: SyntheticScene, frame_id):
    """Project visible landmarks for one pose.

    Returns (FrameFeatures, depths_m, landmark_ids). Deterministic: the
    descriptor noise stream is derived from (scene.seed, frame_id).
    """
    pose = scene.path[frame_id]
    K = scene.intrinsics
    T_wc = SE3.from_quat(pose.quaternion, pose.translation)
    T_cw = T_wc.inverse()
    p_cam = T_cw.apply(scene.landmarks)
    z = p_cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * p_cam[:, 0] / z + K.cx
        v = K.fy * p_cam[:, 1] / z + K.cy
    visible = ((z > 0.2) & (z < 9.5) & (u >= 0) & (u <= K.width - 1)
               & (v >= 0) & (v <= K.height - 1))
    ids = np.flatnonzero(visible)
    rng = np.random.default_rng((scene.seed, frame_id))
    desc = scene.signatures[ids].copy()
    if scene.noise_sigma > 0:
        desc = desc + rng.normal(0.0, scene.noise_sigma, desc.shape)
    features = FrameFeatures(
        frame_id,
        np.stack([u[ids], v[ids]], axis=1).astype(np.float32),
        desc.astype(np.float32),
    )
    return features, z[ids].copy(), ids


def write_scene_dataset(scene: SyntheticScene, out_dir):
    """Write the full synthetic dataset: manifest, ground truth, features.

    Layout:
      out_dir/sequence.json         manifest (intrinsics, depth_scale, frames)
      out_dir/groundtruth.txt       TUM trajectory
      out_dir/features/NNNNNN.rwtf            keypoints + descriptors
      out_dir/features/NNNNNN.depth.json      raw depth per keypoint
      out_dir/features/NNNNNN.landmarks.json  landmark id per keypoint
    """
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    frames = []
    for i in range(len(scene.path)):
        features, depths_m, ids = render_frame(scene, i)
        stem = f"{i:06d}"
        write_feature_file(feat_dir / f"{stem}.rwtf", features)
        raw = (depths_m * scene.depth_scale).astype(np.float32)
        (feat_dir / f"{stem}.depth.json").write_text(
            json.dumps([float(x) for x in raw]))
        (feat_dir / f"{stem}.landmarks.json").write_text(
            json.dumps([int(x) for x in ids]))
        frames.append({"id": i, "timestamp": scene.path[i].timestamp,
                       "stem": stem})
    manifest = {
        "type": "synthetic",
        "intrinsics": scene.intrinsics.to_dict(),
        "depth_scale": scene.depth_scale,
        "seed": scene.seed,
        "noise_sigma": scene.noise_sigma,
        "frames": frames,
    }
    (out_dir / "sequence.json").write_text(json.dumps(manifest, indent=2))
    write_trajectory(out_dir / "groundtruth.txt", scene.path)
    return out_dir
