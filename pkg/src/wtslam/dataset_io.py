"""Dataset and file I/O: TUM-style sequences, RWTF feature files, trajectories.

File formats handled here:
  - TUM list files ("timestamp filename" per line, '#' comments)
  - TUM trajectory files ("timestamp tx ty tz qx qy qz qw")
  - RWTF binary feature files (keypoints + 384-dim descriptors)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DESCRIPTOR_DIM = 384
RWTF_MAGIC = b"RWTF"
RWTF_VERSION = 1

DEFAULT_DEPTH_SCALE = 5000.0  # TUM convention: raw 16-bit depth / 5000 = meters
DEFAULT_MAX_DT = 0.02


class DatasetError(Exception):
    pass


class MissingFile(DatasetError):
    pass


class EmptySequence(DatasetError):
    pass


class ParseError(DatasetError):
    def __init__(self, msg, path=None, line=None):
        self.path = path
        self.line = line
        if line is not None:
            msg = f"{path}:{line}: {msg}"
        super().__init__(msg)


class BadMagic(DatasetError):
    pass


class UnsupportedVersion(DatasetError):
    pass


class DimensionMismatch(DatasetError):
    pass


class TruncatedFile(DatasetError):
    pass


class NonUnitQuaternion(DatasetError):
    pass


@dataclass
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def as_matrix(self):
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def to_dict(self):
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"],
                   width=int(d["width"]), height=int(d["height"]))


@dataclass
class Pose:
    """Camera-to-world pose in TUM convention (translation + unit quaternion xyzw)."""

    timestamp: float
    translation: np.ndarray  # (3,)
    quaternion: np.ndarray   # (4,) qx qy qz qw

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64)
        self.quaternion = np.asarray(self.quaternion, dtype=np.float64)
        n = np.linalg.norm(self.quaternion)
        if abs(n - 1.0) > 1e-3:
            raise NonUnitQuaternion(f"quaternion norm {n:.6f} at t={self.timestamp}")
        self.quaternion = self.quaternion / n

    @classmethod
    def identity(cls, timestamp=0.0):
        return cls(timestamp, np.zeros(3), np.array([0.0, 0.0, 0.0, 1.0]))


@dataclass
class SequenceEntry:
    timestamp: float
    rgb_path: Path
    depth_path: Path
    gt_pose: Pose | None = None


@dataclass
class SequenceIndex:
    entries: list[SequenceEntry]
    intrinsics: CameraIntrinsics
    depth_scale: float = DEFAULT_DEPTH_SCALE


@dataclass
class FrameFeatures:
    frame_id: int
    keypoints: np.ndarray    # (N, 2) float32, pixel (u, v)
    descriptors: np.ndarray  # (N, 384) float32

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=np.float32).reshape(-1, 2)
        desc = np.asarray(self.descriptors, dtype=np.float32)
        if desc.size == 0:
            desc = desc.reshape(0, DESCRIPTOR_DIM)
        self.descriptors = desc
        if len(self.keypoints) != len(self.descriptors):
            raise DimensionMismatch(
                f"{len(self.keypoints)} keypoints vs {len(self.descriptors)} descriptors"
            )

    def __len__(self):
        return len(self.keypoints)


def read_list_file(path):
    """Parse a TUM list file into (timestamp, filename) tuples."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    out = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ParseError("expected 'timestamp filename'", path, lineno)
        try:
            ts = float(parts[0])
        except ValueError:
            raise ParseError(f"bad timestamp {parts[0]!r}", path, lineno)
        out.append((ts, parts[1]))
    return out


def associate_timestamps(a, b, max_dt):
    """Greedy mutual-nearest association of two sorted timestamp lists.

    Returns index pairs (i, j) with |a[i]-b[j]| <= max_dt, each index used
    at most once. Ties at equal |dt| resolve toward the earlier candidate.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        return []
    dt = np.abs(a[:, None] - b[None, :])
    ii, jj = np.nonzero(dt <= max_dt)
    cands = sorted(zip(dt[ii, jj], ii.tolist(), jj.tolist()))
    used_a, used_b = set(), set()
    pairs = []
    for _, i, j in cands:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j))
    pairs.sort()
    return pairs


def load_tum_sequence(dir, max_dt=DEFAULT_MAX_DT, intrinsics=None,
                      depth_scale=None):
    """Load a TUM RGB-D sequence directory into a SequenceIndex.

    Expects rgb.txt and depth.txt; groundtruth.txt optional. Intrinsics come
    from config.json in the directory unless passed explicitly.
    """
    dir = Path(dir)
    rgb = read_list_file(dir / "rgb.txt")
    depth = read_list_file(dir / "depth.txt")

    cfg_path = dir / "config.json"
    if intrinsics is None:
        if not cfg_path.is_file():
            raise MissingFile(f"{cfg_path} (camera intrinsics required)")
        cfg = json.loads(cfg_path.read_text())
        intrinsics = CameraIntrinsics.from_dict(cfg["intrinsics"])
        if depth_scale is None:
            depth_scale = cfg.get("depth_scale", DEFAULT_DEPTH_SCALE)
    if depth_scale is None:
        depth_scale = DEFAULT_DEPTH_SCALE

    pairs = associate_timestamps([t for t, _ in rgb], [t for t, _ in depth], max_dt)
    if not pairs:
        raise EmptySequence(f"no rgb/depth pairs within {max_dt}s in {dir}")

    gt_poses = []
    gt_path = dir / "groundtruth.txt"
    if gt_path.is_file():
        gt_poses = read_trajectory(gt_path)

    entries = []
    for i, j in pairs:
        ts = rgb[i][0]
        gt = None
        if gt_poses:
            dts = [abs(p.timestamp - ts) for p in gt_poses]
            k = int(np.argmin(dts))
            if dts[k] <= max_dt:
                gt = gt_poses[k]
        entries.append(SequenceEntry(ts, dir / rgb[i][1], dir / depth[j][1], gt))

    entries.sort(key=lambda e: e.timestamp)
    for p, q in zip(entries, entries[1:]):
        if q.timestamp <= p.timestamp:
            raise ParseError(f"non-increasing timestamps {p.timestamp} -> {q.timestamp}",
                             dir / "rgb.txt")
    return SequenceIndex(entries, intrinsics, depth_scale)


# --- RWTF feature files -----------------------------------------------------

_RWTF_HEADER = struct.Struct("<4sIII")


def write_feature_file(path, features: FrameFeatures):
    """Write FrameFeatures in the RWTF binary format (little-endian)."""
    n = len(features)
    desc = np.ascontiguousarray(features.descriptors, dtype="<f4")
    if n and desc.shape[1] != DESCRIPTOR_DIM:
        raise DimensionMismatch(f"descriptor dim {desc.shape[1]} != {DESCRIPTOR_DIM}")
    kps = np.ascontiguousarray(features.keypoints, dtype="<f4")
    buf = bytearray(_RWTF_HEADER.pack(RWTF_MAGIC, RWTF_VERSION, n, DESCRIPTOR_DIM))
    if n:
        records = np.concatenate([kps, desc.reshape(n, DESCRIPTOR_DIM)], axis=1)
        buf += np.ascontiguousarray(records, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(buf))


def read_feature_file(path, frame_id=0) -> FrameFeatures:
    """Read an RWTF feature file; inverse of write_feature_file, bit-exact."""
    data = Path(path).read_bytes()
    if len(data) < _RWTF_HEADER.size:
        raise TruncatedFile(f"{path}: {len(data)} bytes, header needs 16")
    magic, version, n, dim = _RWTF_HEADER.unpack_from(data)
    if magic != RWTF_MAGIC:
        raise BadMagic(f"{path}: magic {magic!r}")
    if version != RWTF_VERSION:
        raise UnsupportedVersion(f"{path}: version {version}")
    if dim != DESCRIPTOR_DIM:
        raise DimensionMismatch(f"{path}: descriptor dim {dim} != {DESCRIPTOR_DIM}")
    expected = _RWTF_HEADER.size + n * 4 * (2 + dim)
    if len(data) < expected:
        raise TruncatedFile(f"{path}: {len(data)} bytes, expected {expected}")
    if n == 0:
        return FrameFeatures(frame_id, np.zeros((0, 2), np.float32),
                             np.zeros((0, DESCRIPTOR_DIM), np.float32))
    records = np.frombuffer(data, dtype="<f4", count=n * (2 + dim),
                            offset=_RWTF_HEADER.size).reshape(n, 2 + dim)
    return FrameFeatures(frame_id, records[:, :2].copy(), records[:, 2:].copy())


# --- TUM trajectories -------------------------------------------------------

def read_trajectory(path):
    """Read a TUM-format trajectory file into a list of Pose."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    poses = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ParseError(f"expected 8 fields, got {len(parts)}", path, lineno)
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ParseError("non-numeric field", path, lineno)
        try:
            poses.append(Pose(vals[0], np.array(vals[1:4]), np.array(vals[4:8])))
        except NonUnitQuaternion as e:
            raise NonUnitQuaternion(f"{path}:{lineno}: {e}")
    return poses


def write_trajectory(path, poses):
    """Write poses in TUM format with 9-decimal precision."""
    lines = []
    for p in poses:
        t = p.translation
        q = p.quaternion
        lines.append(
            f"{p.timestamp:.9f} {t[0]:.9f} {t[1]:.9f} {t[2]:.9f} "
            f"{q[0]:.9f} {q[1]:.9f} {q[2]:.9f} {q[3]:.9f}"
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
