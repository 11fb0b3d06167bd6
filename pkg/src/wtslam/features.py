"""Hierarchical descriptor model and structure-aware feature masks.

Descriptors are 384-dim: a 256-dim coarse part (1/8-scale grid features)
concatenated with a 128-dim fine part (local-window features). Feature masks
are built from Canny edges + probabilistic Hough lines rasterized as thick
line segments; only keypoints inside the mask are kept for matching.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .dataset_io import DESCRIPTOR_DIM, DimensionMismatch, FrameFeatures

COARSE_DIM = 256
FINE_DIM = 128
COARSE_SCALE = 8   # coarse grid cell size in pixels
FINE_SCALE = 2     # fine-offset unit in pixels
DEFAULT_LINE_WIDTH = 20
DEFAULT_FALLBACK_MIN = 100


class FeatureError(Exception):
    pass


class OutOfBounds(FeatureError):
    pass


class EmptyImage(FeatureError):
    pass


@dataclass
class MaskParams:
    canny_lo: float = 50.0
    canny_hi: float = 150.0
    hough_threshold: int = 50
    hough_min_len: float = 50.0
    hough_max_gap: float = 10.0
    line_width: int = DEFAULT_LINE_WIDTH


def grid_shape(width, height):
    """Coarse grid dimensions for an image (1/8 scale, ceil)."""
    return (width + COARSE_SCALE - 1) // COARSE_SCALE, \
           (height + COARSE_SCALE - 1) // COARSE_SCALE


def map_coarse_to_image(gx, gy, width, height):
    """Coarse grid cell -> pixel position: (8*gx, 8*gy). Integer exact."""
    gw, gh = grid_shape(width, height)
    if not (0 <= gx < gw and 0 <= gy < gh):
        raise OutOfBounds(f"grid ({gx},{gy}) outside {gw}x{gh}")
    return COARSE_SCALE * gx, COARSE_SCALE * gy


def map_fine_to_image(gx, gy, sx, sy, width, height):
    """Fine position: 8*g + 2*offset, clamped to image bounds.

    Returns (u, v, clamped). Offsets live in the 5x5 fine-window frame,
    each component within [-2.5, 2.5].
    """
    u = COARSE_SCALE * gx + FINE_SCALE * sx
    v = COARSE_SCALE * gy + FINE_SCALE * sy
    cu = min(max(u, 0.0), float(width - 1))
    cv_ = min(max(v, 0.0), float(height - 1))
    return cu, cv_, (cu != u or cv_ != v)


def assemble_descriptor(coarse, fine, normalize=True):
    """Concatenate 256-dim coarse and 128-dim fine parts into a 384 vector.

    With normalize on, the result is scaled to unit Euclidean norm; an
    all-zero input is left as-is and reported degenerate.
    Returns (descriptor, degenerate).
    """
    coarse = np.asarray(coarse, dtype=np.float32).ravel()
    fine = np.asarray(fine, dtype=np.float32).ravel()
    if coarse.shape[0] != COARSE_DIM:
        raise DimensionMismatch(f"coarse dim {coarse.shape[0]} != {COARSE_DIM}")
    if fine.shape[0] != FINE_DIM:
        raise DimensionMismatch(f"fine dim {fine.shape[0]} != {FINE_DIM}")
    d = np.concatenate([coarse, fine])
    if not normalize:
        return d, False
    n = float(np.linalg.norm(d))
    if n == 0.0:
        return d, True
    return d / n, False


def normalize_descriptors(descriptors):
    """Row-normalize to unit length. Zero rows are kept and flagged.

    Returns (normalized, degenerate_mask).
    """
    d = np.asarray(descriptors, dtype=np.float32)
    norms = np.linalg.norm(d.astype(np.float64), axis=1)
    degenerate = norms == 0.0
    safe = np.where(degenerate, 1.0, norms)
    return (d / safe[:, None].astype(np.float32)), degenerate


def select_descriptor_parts(descriptors, use_coarse=True, use_fine=True):
    """Zero out the unused descriptor slice and renormalize the active one.

    Used by ablation runs: distances are then computed on the remaining
    slice only (the zeroed slice contributes nothing).
    """
    if not (use_coarse or use_fine):
        raise ValueError("at least one descriptor part must be active")
    d = np.array(descriptors, dtype=np.float32, copy=True)
    if d.size and d.shape[1] != DESCRIPTOR_DIM:
        raise DimensionMismatch(f"descriptor dim {d.shape[1]} != {DESCRIPTOR_DIM}")
    if not use_coarse:
        d[:, :COARSE_DIM] = 0.0
    if not use_fine:
        d[:, COARSE_DIM:] = 0.0
    d, _ = normalize_descriptors(d)
    return d


def compute_feature_mask(gray, params: MaskParams | None = None):
    """Build a binary mask of thick Hough-line regions from a gray image.

    Canny edges -> probabilistic Hough segments -> each segment drawn with
    thickness params.line_width. No detected lines gives an all-false mask.
    """
    if params is None:
        params = MaskParams()
    gray = np.asarray(gray)
    if gray.size == 0:
        raise EmptyImage("zero-size image")
    if gray.ndim != 2:
        raise FeatureError("expected single-channel image")
    if gray.dtype != np.uint8:
        gray = np.clip(gray, 0, 255).astype(np.uint8)

    edges = cv2.Canny(gray, params.canny_lo, params.canny_hi, apertureSize=3)
    lines = cv2.HoughLinesP(
        edges, 1, np.pi / 180.0, params.hough_threshold,
        minLineLength=params.hough_min_len, maxLineGap=params.hough_max_gap,
    )
    segments = lines.reshape(-1, 4) if lines is not None else []
    return rasterize_segments(segments, gray.shape, params.line_width)


def rasterize_segments(segments, shape, line_width=DEFAULT_LINE_WIDTH):
    """Rasterize (x1,y1,x2,y2) segments as thick lines into a bool mask."""
    mask = np.zeros(shape, dtype=np.uint8)
    for x1, y1, x2, y2 in segments:
        cv2.line(mask, (int(x1), int(y1)), (int(x2), int(y2)), 255,
                 thickness=int(line_width))
    return mask.astype(bool)


def mask_keep_array(keypoints, mask):
    """Boolean keep array: rounded keypoint pixel is inside and mask-true."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise DimensionMismatch("mask must be 2-D")
    h, w = mask.shape
    uv = np.rint(np.asarray(keypoints)).astype(int).reshape(-1, 2)
    keep = np.zeros(len(uv), dtype=bool)
    inb = (uv[:, 0] >= 0) & (uv[:, 0] < w) & (uv[:, 1] >= 0) & (uv[:, 1] < h)
    keep[inb] = mask[uv[inb, 1], uv[inb, 0]]
    return keep


def filter_keypoints(features: FrameFeatures, mask,
                     fallback_min=DEFAULT_FALLBACK_MIN):
    """Keep keypoints whose rounded pixel lies inside the mask.

    If fewer than fallback_min survive, the unfiltered set is returned with
    the fallback flag set (tracking must not starve in structureless scenes).
    Returns (features, fallback_used).
    """
    if len(features) == 0:
        return features, False
    keep = mask_keep_array(features.keypoints, mask)
    if int(keep.sum()) < fallback_min:
        return features, True
    return FrameFeatures(features.frame_id, features.keypoints[keep],
                         features.descriptors[keep]), False
