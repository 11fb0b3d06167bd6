"""Synthetic RWTF export: project landmarks, add seeded descriptor noise.

Output layout (one directory per sequence):
  sequence.json                 intrinsics, depth scale, frame table
  groundtruth.txt               TUM camera-to-world trajectory
  features/NNNNNN.rwtf            keypoints + raw descriptors
  features/NNNNNN.depth.json      raw (scaled) depth per keypoint
  features/NNNNNN.landmarks.json  landmark id per keypoint

Per-frame noise streams come from (seed, frame_id), so export is
deterministic regardless of frame processing order.
"""

import json
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .formats import write_rwtf, write_tum_trajectory
from .scene import SyntheticScene


def project_frame(scene: SyntheticScene, frame_id):
    """Project visible landmarks for one pose.

    Returns (keypoints (n,2), descriptors (n,384), depths_m (n,),
    landmark_ids (n,)). Visibility is positive depth plus the image
    frustum.
    """
    ts, t_wc, q_wc = scene.path[frame_id]
    K = scene.intrinsics
    R_wc = Rotation.from_quat(q_wc).as_matrix()
    p_cam = (scene.landmarks - t_wc) @ R_wc  # R_wc^T (p - t)
    z = p_cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * p_cam[:, 0] / z + K.cx
        v = K.fy * p_cam[:, 1] / z + K.cy
    visible = ((z > 1e-6) & (u >= 0) & (u <= K.width - 1)
               & (v >= 0) & (v <= K.height - 1))
    ids = np.flatnonzero(visible)
    desc = scene.signatures[ids].copy()
    if scene.noise_sigma > 0:
        rng = np.random.default_rng((scene.seed, frame_id))
        desc = desc + rng.normal(0.0, scene.noise_sigma, desc.shape)
    kps = np.stack([u[ids], v[ids]], axis=1)
    return kps, desc, z[ids].copy(), ids


def export_synthetic(scene: SyntheticScene, out_dir):
    """Write the full synthetic sequence; returns the output Path."""
    scene.validate()
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    frames = []
    for i in range(len(scene.path)):
        kps, desc, depths_m, ids = project_frame(scene, i)
        stem = f"{i:06d}"
        write_rwtf(feat_dir / f"{stem}.rwtf", kps, desc)
        raw = (depths_m * scene.depth_scale).astype(np.float32)
        (feat_dir / f"{stem}.depth.json").write_text(
            json.dumps([float(x) for x in raw]))
        (feat_dir / f"{stem}.landmarks.json").write_text(
            json.dumps([int(x) for x in ids]))
        frames.append({"id": i, "timestamp": scene.path[i][0], "stem": stem})
    manifest = {
        "type": "synthetic",
        "intrinsics": scene.intrinsics.to_dict(),
        "depth_scale": scene.depth_scale,
        "seed": scene.seed,
        "noise_sigma": scene.noise_sigma,
        "frames": frames,
    }
    (out_dir / "sequence.json").write_text(json.dumps(manifest, indent=2))
    write_tum_trajectory(out_dir / "groundtruth.txt", scene.path)
    return out_dir
