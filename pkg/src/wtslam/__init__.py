"""Keyframe-based RGB-D tracking with hierarchical deep descriptors."""

__version__ = "0.1.0"

from .dataset_io import (CameraIntrinsics, FrameFeatures, Pose, SequenceIndex,
                         load_tum_sequence, read_feature_file,
                         read_trajectory, write_feature_file,
                         write_trajectory)
from .evaluation import AteReport, ate_rmse, interpolate_trajectory
from .geometry import SE3, motion_only_ba, pnp_ransac, se3_exp, se3_log, \
    umeyama_align
from .matching import Match, knn_match, mutual_filter, score_matrix
from .tracking import Status, Tracker, TrackerConfig
from .vocabulary import VocabTree, similarity

__all__ = [
    "CameraIntrinsics", "FrameFeatures", "Pose", "SequenceIndex",
    "load_tum_sequence", "read_feature_file", "write_feature_file",
    "read_trajectory", "write_trajectory",
    "AteReport", "ate_rmse", "interpolate_trajectory",
    "SE3", "se3_exp", "se3_log", "pnp_ransac", "motion_only_ba",
    "umeyama_align",
    "Match", "knn_match", "mutual_filter", "score_matrix",
    "Status", "Tracker", "TrackerConfig",
    "VocabTree", "similarity",
]
