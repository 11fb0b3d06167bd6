"""End-to-end tracking runs over a dataset + precomputed feature files.

Supports two dataset flavors: synthetic datasets (sequence.json manifest
with per-keypoint depth sidecars) and TUM RGB-D directories (rgb.txt /
depth.txt / config.json with depth images sampled at keypoints). Feature
files are RWTF, one per frame, named by frame index.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import cv2
import numpy as np

from . import features as feat
from .dataset_io import (DEFAULT_DEPTH_SCALE, DEFAULT_MAX_DT, CameraIntrinsics,
                         MissingFile, Pose, load_tum_sequence,
                         read_feature_file, read_trajectory, write_trajectory)
from .evaluation import ate_rmse, interpolate_trajectory
from .tracking import Status, Tracker, TrackerConfig
from .vocabulary import VocabTree

VERSION = "0.1.0"

ABLATION_CONFIGS = [
    ("coarse_only", {"use_fine": False}),
    ("fine_only", {"use_coarse": False}),
    ("no_mask", {"use_mask": False}),
    ("no_ratio_test", {"use_knn_ratio": False}),
    ("full", {}),
]


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    dataset_dir: str
    output_dir: str
    features_dir: str | None = None
    vocab_path: str | None = None
    frame_stride: int = 5
    use_coarse: bool = True
    use_fine: bool = True
    use_mask: bool = True
    use_knn_ratio: bool = True
    knn_ratio: float = 0.8
    seed: int = 42
    max_dt: float = DEFAULT_MAX_DT
    fallback_min: int = feat.DEFAULT_FALLBACK_MIN
    min_init_points: int = 50
    min_track_inliers: int = 15
    mask: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.use_coarse or self.use_fine):
            raise ConfigError("at least one of use_coarse/use_fine required")
        if self.frame_stride < 1:
            raise ConfigError("frame_stride must be >= 1")

    def resolved_features_dir(self):
        if self.features_dir:
            return Path(self.features_dir)
        return Path(self.dataset_dir) / "features"


@dataclass
class Frame:
    index: int
    timestamp: float
    features: object
    depths_m: np.ndarray
    image_path: Path | None = None


@dataclass
class RunSummary:
    n_frames: int
    n_processed: int
    n_tracked: int
    initialized: bool
    output_dir: Path

    @property
    def tracked_fraction(self):
        return self.n_tracked / self.n_processed if self.n_processed else 0.0


def _load_synthetic_frames(dataset_dir, features_dir):
    manifest = json.loads((Path(dataset_dir) / "sequence.json").read_text())
    intr = CameraIntrinsics.from_dict(manifest["intrinsics"])
    scale = manifest.get("depth_scale", DEFAULT_DEPTH_SCALE)
    frames = []
    for fr in manifest["frames"]:
        stem = fr.get("stem", f"{fr['id']:06d}")
        fpath = features_dir / f"{stem}.rwtf"
        if not fpath.is_file():
            raise MissingFile(str(fpath))
        ff = read_feature_file(fpath, frame_id=fr["id"])
        raw = np.array(json.loads(
            (features_dir / f"{stem}.depth.json").read_text()))
        frames.append(Frame(fr["id"], fr["timestamp"], ff, raw / scale))
    return frames, intr


def _load_tum_frames(dataset_dir, features_dir, max_dt):
    seq = load_tum_sequence(dataset_dir, max_dt=max_dt)
    frames = []
    for i, entry in enumerate(seq.entries):
        fpath = features_dir / f"{i:06d}.rwtf"
        if not fpath.is_file():
            raise MissingFile(str(fpath))
        ff = read_feature_file(fpath, frame_id=i)
        depth_img = cv2.imread(str(entry.depth_path), cv2.IMREAD_UNCHANGED)
        if depth_img is None:
            raise MissingFile(str(entry.depth_path))
        uv = np.rint(ff.keypoints).astype(int)
        h, w = depth_img.shape[:2]
        raw = np.zeros(len(ff), dtype=np.float64)
        inb = (uv[:, 0] >= 0) & (uv[:, 0] < w) & (uv[:, 1] >= 0) & (uv[:, 1] < h)
        raw[inb] = depth_img[uv[inb, 1], uv[inb, 0]].astype(np.float64)
        frames.append(Frame(i, entry.timestamp, ff, raw / seq.depth_scale,
                            image_path=entry.rgb_path))
    return frames, seq.intrinsics


def load_frames(config: RunConfig):
    """Load all frames of a dataset. Returns (frames, intrinsics)."""
    dataset_dir = Path(config.dataset_dir)
    features_dir = config.resolved_features_dir()
    if not features_dir.is_dir():
        raise MissingFile(str(features_dir))
    if (dataset_dir / "sequence.json").is_file():
        return _load_synthetic_frames(dataset_dir, features_dir)
    if (dataset_dir / "rgb.txt").is_file():
        return _load_tum_frames(dataset_dir, features_dir, config.max_dt)
    raise MissingFile(f"{dataset_dir}: no sequence.json or rgb.txt")


def _prepare_frame(frame: Frame, config: RunConfig, mask_params):
    """Apply ablation slicing, normalization and the feature mask."""
    ff = frame.features
    depths = frame.depths_m
    if config.use_mask and frame.image_path is not None:
        gray = cv2.imread(str(frame.image_path), cv2.IMREAD_GRAYSCALE)
        if gray is not None:
            mask = feat.compute_feature_mask(gray, mask_params)
            keep = feat.mask_keep_array(ff.keypoints, mask)
            if int(keep.sum()) >= config.fallback_min:
                ff = type(ff)(ff.frame_id, ff.keypoints[keep],
                              ff.descriptors[keep])
                depths = depths[keep]
    desc = feat.select_descriptor_parts(
        ff.descriptors, use_coarse=config.use_coarse,
        use_fine=config.use_fine)
    ff = type(ff)(ff.frame_id, ff.keypoints, desc)
    return ff, depths


def run_tracking(config: RunConfig):
    """Run the tracker over a sequence and write all run artifacts.

    Writes trajectory.txt (interpolated to every frame), tracking.log,
    loops.log and manifest.json into config.output_dir.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames, intrinsics = load_frames(config)

    vocab = VocabTree.load(config.vocab_path) if config.vocab_path else None
    tcfg = TrackerConfig(
        min_init_points=config.min_init_points,
        min_track_inliers=config.min_track_inliers,
        knn_ratio=config.knn_ratio if config.use_knn_ratio else None,
        seed=config.seed,
    )
    tracker = Tracker(intrinsics, tcfg, vocab=vocab)
    mask_params = feat.MaskParams(**config.mask) if config.mask \
        else feat.MaskParams()

    processed = frames[::config.frame_stride]
    log_lines = []
    tracked_poses = []
    n_tracked = 0
    initialized = False
    for frame in processed:
        ff, depths = _prepare_frame(frame, config, mask_params)
        if not initialized:
            try:
                result = tracker.initialize(ff, depths, frame.timestamp)
                initialized = True
            except Exception:
                log_lines.append(_log_line(frame.timestamp, "Initializing",
                                           0, 0, None))
                continue
        else:
            result = tracker.track_frame(ff, depths, frame.timestamp)
        pose_wc = None
        if result.status is Status.TRACKING and result.pose_cw is not None:
            n_tracked += 1
            T_wc = result.pose_cw.inverse()
            pose_wc = Pose(frame.timestamp, T_wc.t, T_wc.quat_xyzw())
            tracked_poses.append(pose_wc)
        log_lines.append(_log_line(frame.timestamp, result.status.value,
                                   result.inliers, result.matches, pose_wc))

    all_ts = [f.timestamp for f in frames]
    if len(tracked_poses) >= 2:
        trajectory, _ = interpolate_trajectory(tracked_poses, all_ts)
    else:
        trajectory = tracked_poses
    write_trajectory(out_dir / "trajectory.txt", trajectory)
    (out_dir / "tracking.log").write_text(
        "\n".join(log_lines) + ("\n" if log_lines else ""))
    (out_dir / "loops.log").write_text("".join(
        f"{lc.timestamp:.9f} {lc.keyframe_id} {lc.score:.6f}\n"
        for lc in tracker.loop_candidates))
    manifest = {"config": asdict(config), "seed": config.seed,
                "version": VERSION}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return RunSummary(len(frames), len(processed), n_tracked, initialized,
                      out_dir)


def _log_line(ts, status, inliers, matches, pose_wc):
    if pose_wc is None:
        pose_str = "-"
    else:
        t, q = pose_wc.translation, pose_wc.quaternion
        pose_str = " ".join(f"{x:.9f}" for x in (*t, *q))
    return f"{ts:.9f} {status} {inliers} {matches} {pose_str}"


def run_ablation(base_config: RunConfig, min_tracked_fraction=0.6):
    """Run the five ablation configurations and tabulate ATE RMSE.

    A cell is '-' when tracking never initializes, tracks fewer than
    min_tracked_fraction of processed frames, or evaluation fails.
    Returns list of (name, rmse or None).
    """
    gt_path = Path(base_config.dataset_dir) / "groundtruth.txt"
    rows = []
    for name, overrides in ABLATION_CONFIGS:
        cfg_dict = asdict(base_config)
        cfg_dict.update(overrides)
        cfg_dict["output_dir"] = str(Path(base_config.output_dir) / name)
        rmse = None
        try:
            summary = run_tracking(RunConfig(**cfg_dict))
            if summary.initialized and \
                    summary.tracked_fraction >= min_tracked_fraction:
                est = read_trajectory(summary.output_dir / "trajectory.txt")
                gt = read_trajectory(gt_path)
                rmse = ate_rmse(est, gt, max_dt=base_config.max_dt).rmse
        except Exception:
            rmse = None
        rows.append((name, rmse))
    table = "config\tate_rmse_m\n" + "".join(
        f"{name}\t{rmse:.6f}\n" if rmse is not None else f"{name}\t-\n"
        for name, rmse in rows)
    out = Path(base_config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.tsv").write_text(table)
    return rows
