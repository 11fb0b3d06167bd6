"""Writers for the on-disk interchange formats.

RWTF layout (little-endian):
  bytes 0-3   magic "RWTF"
  bytes 4-7   version (u32) = 1
  bytes 8-11  keypoint count N (u32)
  bytes 12-15 descriptor dim D (u32) = 384
  then N records of [u f32, v f32, D x f32 descriptor]

Trajectories are TUM text lines "timestamp tx ty tz qx qy qz qw" with
9-decimal precision.
"""

import struct
from pathlib import Path

import numpy as np

RWTF_MAGIC = b"RWTF"
RWTF_VERSION = 1
DESCRIPTOR_DIM = 384
DEFAULT_DEPTH_SCALE = 5000.0

_HEADER = struct.Struct("<4sIII")


def write_rwtf(path, keypoints, descriptors):
    """Write keypoints (N,2) and raw descriptors (N,384) as float32."""
    kps = np.ascontiguousarray(keypoints, dtype="<f4").reshape(-1, 2)
    desc = np.ascontiguousarray(descriptors, dtype="<f4")
    n = kps.shape[0]
    if n and desc.shape != (n, DESCRIPTOR_DIM):
        raise ValueError(f"descriptor shape {desc.shape} for {n} keypoints")
    buf = bytearray(_HEADER.pack(RWTF_MAGIC, RWTF_VERSION, n, DESCRIPTOR_DIM))
    if n:
        buf += np.concatenate(
            [kps, desc.reshape(n, DESCRIPTOR_DIM)], axis=1).astype(
            "<f4").tobytes()
    Path(path).write_bytes(bytes(buf))


def write_tum_trajectory(path, rows):
    """rows: iterable of (timestamp, t(3,), q_xyzw(4,))."""
    lines = []
    for ts, t, q in rows:
        lines.append(f"{ts:.9f} {t[0]:.9f} {t[1]:.9f} {t[2]:.9f} "
                     f"{q[0]:.9f} {q[1]:.9f} {q[2]:.9f} {q[3]:.9f}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
