"""Trajectory association, Umeyama-aligned ATE RMSE and SE(3) interpolation.

Follows the TUM evaluation conventions: nearest-timestamp association,
rigid alignment of estimated to ground-truth translations, translation-only
RMSE. Interpolation fills in frames skipped by strided tracking
(translation lerp + quaternion slerp, clamped at the ends).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .dataset_io import DEFAULT_MAX_DT, Pose, associate_timestamps
from .geometry import DegenerateInput, umeyama_align


class EvaluationError(Exception):
    pass


class NoOverlap(EvaluationError):
    pass


class TooFewPoses(EvaluationError):
    pass


@dataclass
class AteReport:
    rmse: float
    mean: float
    median: float
    max: float
    matched_pairs: int
    rotation: np.ndarray
    translation: np.ndarray
    scale: float

    def format(self):
        return (
            f"matched_pairs: {self.matched_pairs}\n"
            f"rmse: {self.rmse:.6f}\n"
            f"mean: {self.mean:.6f}\n"
            f"median: {self.median:.6f}\n"
            f"max: {self.max:.6f}\n"
            f"scale: {self.scale:.6f}\n"
        )


def associate(est, gt, max_dt=DEFAULT_MAX_DT):
    """Pair poses of two trajectories by mutual-nearest timestamps."""
    pairs = associate_timestamps([p.timestamp for p in est],
                                 [p.timestamp for p in gt], max_dt)
    if not pairs:
        raise NoOverlap(f"no timestamp pairs within {max_dt}s")
    return [(est[i], gt[j]) for i, j in pairs]


def ate_rmse(est, gt, max_dt=DEFAULT_MAX_DT, with_scale=False):
    """ATE report after rigid (optionally similarity) alignment."""
    pairs = associate(est, gt, max_dt)
    if len(pairs) < 3:
        raise NoOverlap(f"only {len(pairs)} associated pairs, need >= 3")
    P = np.array([e.translation for e, _ in pairs])
    Q = np.array([g.translation for _, g in pairs])
    R, t, s = umeyama_align(P, Q, with_scale=with_scale)
    aligned = s * (P @ R.T) + t
    err = np.linalg.norm(Q - aligned, axis=1)
    return AteReport(
        rmse=float(np.sqrt(np.mean(err**2))),
        mean=float(np.mean(err)),
        median=float(np.median(err)),
        max=float(np.max(err)),
        matched_pairs=len(pairs),
        rotation=R, translation=t, scale=s,
    )


def interpolate_trajectory(sparse, query_timestamps):
    """Interpolate a sparse trajectory at the query timestamps.

    Linear translation, slerp rotation (shorter arc). Queries at knots are
    exact; out-of-range queries clamp to the nearest endpoint.
    Returns (poses, clamped_mask).
    """
    if len(sparse) < 2:
        raise TooFewPoses(f"{len(sparse)} poses, need >= 2")
    knots = np.array([p.timestamp for p in sparse])
    if np.any(np.diff(knots) <= 0):
        raise EvaluationError("knot timestamps must strictly increase")
    trans = np.array([p.translation for p in sparse])
    rots = Rotation.from_quat(np.array([p.quaternion for p in sparse]))
    slerp = Slerp(knots, rots)

    out = []
    clamped = []
    for tq in query_timestamps:
        tc = min(max(float(tq), knots[0]), knots[-1])
        clamped.append(tc != tq)
        i = int(np.searchsorted(knots, tc, side="right") - 1)
        i = min(max(i, 0), len(knots) - 2)
        t0, t1 = knots[i], knots[i + 1]
        alpha = (tc - t0) / (t1 - t0)
        p = (1 - alpha) * trans[i] + alpha * trans[i + 1]
        q = slerp([tc])[0].as_quat()
        out.append(Pose(float(tq), p, q))
    return out, np.array(clamped, dtype=bool)
