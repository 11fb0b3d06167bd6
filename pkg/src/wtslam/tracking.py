"""Keyframe-based tracking state machine over precomputed frame features.

Per frame: KNN-match descriptors against the reference keyframe's map
points, PnP-RANSAC for an initial pose, extend matches into the local map,
motion-only BA refinement, then keyframe/map bookkeeping. Relocalization
queries the BoW database when tracking is lost. Matching is pure KNN +
ratio test; no constant-velocity projection windows.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import geometry, matching, vocabulary
from .dataset_io import CameraIntrinsics, FrameFeatures
from .geometry import SE3


class TrackingError(Exception):
    pass


class NotEnoughPoints(TrackingError):
    pass


class Status(enum.Enum):
    INITIALIZING = "Initializing"
    TRACKING = "Tracking"
    LOST = "Lost"


@dataclass
class TrackerConfig:
    min_init_points: int = 50
    min_track_inliers: int = 15
    knn_ratio: float | None = 0.8
    ransac_iters: int = 100
    reproj_thresh: float = 3.0
    huber_delta: float = geometry.DEFAULT_HUBER_DELTA
    seed: int = 42
    kf_tracked_ratio: float = 0.9
    kf_max_interval: int = 20
    covisible_keyframes: int = 10
    cull_min_visible: int = 8
    cull_found_ratio: float = 0.25
    cull_kf_window: int = 3
    loop_sim_threshold: float = 0.3
    depth_min: float = geometry.DEPTH_MIN
    depth_max: float = geometry.DEPTH_MAX


@dataclass
class MapPoint:
    id: int
    position: np.ndarray
    descriptor: np.ndarray
    observations: list = field(default_factory=list)  # (kf_id, kp_index)
    obs_descriptors: list = field(default_factory=list)
    visible: int = 0
    found: int = 0
    last_kf_observed: int = 0

    def add_observation(self, kf_id, kp_index, descriptor):
        self.observations.append((kf_id, kp_index))
        self.obs_descriptors.append(np.asarray(descriptor, dtype=np.float64))
        self.last_kf_observed = kf_id
        self._update_representative()

    def _update_representative(self):
        # representative = observation descriptor minimizing median distance
        # to the others
        if len(self.obs_descriptors) <= 2:
            self.descriptor = self.obs_descriptors[-1]
            return
        D = np.array(self.obs_descriptors)
        dist = np.linalg.norm(D[:, None, :] - D[None, :, :], axis=2)
        med = np.median(dist, axis=1)
        self.descriptor = self.obs_descriptors[int(np.argmin(med))]


@dataclass
class KeyFrame:
    id: int
    pose_cw: SE3
    features: FrameFeatures
    depths_m: np.ndarray            # per-keypoint depth in meters, NaN invalid
    timestamp: float
    map_point_ids: dict = field(default_factory=dict)  # kp_index -> mp id
    bow: dict = field(default_factory=dict)


@dataclass
class TrackResult:
    status: Status
    pose_cw: SE3 | None
    inliers: int
    matches: int
    timestamp: float


@dataclass
class LoopCandidate:
    timestamp: float
    keyframe_id: int
    score: float


class Tracker:
    """Single-owner sequential tracker; one frame at a time."""

    def __init__(self, intrinsics: CameraIntrinsics,
                 config: TrackerConfig | None = None, vocab=None):
        self.K = intrinsics
        self.config = config or TrackerConfig()
        self.vocab = vocab
        self.status = Status.INITIALIZING
        self.map_points: dict[int, MapPoint] = {}
        self.keyframes: list[KeyFrame] = []
        self.reference_kf: KeyFrame | None = None
        self.last_pose_cw = SE3.identity()
        self._next_mp_id = 0
        self._frames_since_kf = 0
        self.loop_candidates: list[LoopCandidate] = []

    # -- initialization ------------------------------------------------------

    def initialize(self, features: FrameFeatures, depths_m, timestamp):
        """First frame becomes keyframe 0 at the origin."""
        depths_m = np.asarray(depths_m, dtype=np.float64)
        valid = self._valid_depth_mask(depths_m)
        if int(valid.sum()) < self.config.min_init_points:
            raise NotEnoughPoints(
                f"{int(valid.sum())} valid-depth keypoints "
                f"< {self.config.min_init_points}")
        kf = KeyFrame(0, SE3.identity(), features, depths_m, timestamp)
        self.keyframes.append(kf)
        for i in np.flatnonzero(valid):
            self._create_map_point(kf, int(i))
        self._set_bow(kf)
        self.reference_kf = kf
        self.last_pose_cw = SE3.identity()
        self.status = Status.TRACKING
        self._frames_since_kf = 0
        return TrackResult(self.status, SE3.identity(), len(self.map_points),
                           len(self.map_points), timestamp)

    # -- per-frame tracking --------------------------------------------------

    def track_frame(self, features: FrameFeatures, depths_m, timestamp):
        if self.status is Status.INITIALIZING:
            raise TrackingError("tracker not initialized")
        depths_m = np.asarray(depths_m, dtype=np.float64)
        if self.status is Status.LOST:
            pose = self.relocalize(features)
            if pose is None:
                return TrackResult(Status.LOST, None, 0, 0, timestamp)
            self.last_pose_cw = pose
            self.status = Status.TRACKING

        ref_ids, ref_desc = self._map_point_matrix(
            self._reference_point_ids())
        desc = features.descriptors.astype(np.float64)
        result = self._estimate_pose(desc, features.keypoints, ref_ids,
                                     ref_desc)
        if result is None:
            self.status = Status.LOST
            return TrackResult(Status.LOST, None, 0, 0, timestamp)
        pose, matched_mp, kp_of_mp, inlier_ids = result

        # bookkeeping: visibility and found counters over the local map
        self._update_point_stats(pose, matched_mp, inlier_ids)

        n_inliers = len(inlier_ids)
        if n_inliers < self.config.min_track_inliers:
            self.status = Status.LOST
            return TrackResult(Status.LOST, None, n_inliers, len(matched_mp),
                               timestamp)

        self.last_pose_cw = pose
        self.status = Status.TRACKING
        self._frames_since_kf += 1
        res = TrackResult(Status.TRACKING, pose, n_inliers, len(matched_mp),
                          timestamp)
        if self.need_keyframe(res):
            self.insert_keyframe(features, depths_m, pose, timestamp,
                                 kp_of_mp, inlier_ids)
        return res

    def _estimate_pose(self, desc, keypoints, ref_ids, ref_desc):
        """KNN + PnP against the reference set, extended to the local map.

        Returns (pose, matched_mp_ids, kp_index per mp, inlier mp ids) or
        None when matching/estimation fails.
        """
        cfg = self.config
        if len(ref_ids) < 2 or len(desc) == 0:
            return None
        try:
            matches = matching.knn_match(desc, ref_desc, k=2,
                                         ratio=cfg.knn_ratio)
        except matching.TooFewCandidates:
            return None
        pairs = self._dedupe(matches, ref_ids)
        if len(pairs) < 4:
            return None

        # initial pose from the reference-keyframe matches
        mp_ids = [ref_ids[j] for _, j in pairs]
        pts = np.array([self.map_points[m].position for m in mp_ids])
        uvs = np.array([keypoints[i] for i, _ in pairs], dtype=np.float64)
        try:
            pose, mask = geometry.pnp_ransac(
                pts, uvs, self.K, iters=cfg.ransac_iters,
                reproj_thresh=cfg.reproj_thresh,
                min_inliers=min(cfg.min_track_inliers, 4), seed=cfg.seed,
                refine=False)
        except geometry.GeometryError:
            return None

        # extend with local-map points not in the reference set
        local_ids = self._local_map_ids()
        extra_ids = [m for m in local_ids if m not in set(ref_ids)]
        matched = {m: (int(i), uv) for (i, _), m, uv
                   in zip(pairs, mp_ids, uvs)}
        if len(extra_ids) >= 2:
            used_kps = {i for i, _ in pairs}
            free = [i for i in range(len(desc)) if i not in used_kps]
            if free:
                _, extra_desc = self._map_point_matrix(extra_ids)
                try:
                    more = matching.knn_match(desc[free], extra_desc, k=2,
                                              ratio=cfg.knn_ratio)
                except matching.TooFewCandidates:
                    more = []
                for m in self._dedupe(more, extra_ids):
                    kp = free[m[0]]
                    mp = extra_ids[m[1]]
                    if mp not in matched:
                        matched[mp] = (kp, keypoints[kp].astype(np.float64))

        all_ids = sorted(matched)
        pts = np.array([self.map_points[m].position for m in all_ids])
        uvs = np.array([matched[m][1] for m in all_ids])
        pose, _, inlier_mask, _ = geometry.motion_only_ba(
            pose, pts, uvs, self.K, huber_delta=cfg.huber_delta)
        inlier_ids = [m for m, keep in zip(all_ids, inlier_mask) if keep]
        kp_of_mp = {m: matched[m][0] for m in all_ids}
        return pose, all_ids, kp_of_mp, inlier_ids

    @staticmethod
    def _dedupe(matches, candidate_ids):
        """Resolve several queries hitting one candidate: best distance wins.

        Returns (query_index, candidate_position) pairs sorted by query.
        """
        best = {}
        for m in matches:
            cur = best.get(m.index_b)
            if cur is None or m.distance < cur.distance:
                best[m.index_b] = m
        return sorted((m.index_a, m.index_b) for m in best.values())

    # -- keyframe management -------------------------------------------------

    def need_keyframe(self, result: TrackResult):
        if result.status is not Status.TRACKING:
            return False
        ref_count = len(self._reference_point_ids())
        if result.inliers < self.config.kf_tracked_ratio * ref_count:
            return True
        return self._frames_since_kf >= self.config.kf_max_interval

    def insert_keyframe(self, features, depths_m, pose_cw, timestamp,
                        kp_of_mp=None, inlier_ids=None):
        kf = KeyFrame(len(self.keyframes), pose_cw.copy(), features,
                      np.asarray(depths_m, dtype=np.float64), timestamp)
        self.keyframes.append(kf)
        kp_of_mp = kp_of_mp or {}
        inlier_ids = inlier_ids or []
        matched_kps = set()
        for mp_id in inlier_ids:
            mp = self.map_points.get(mp_id)
            if mp is None:
                continue
            kp = kp_of_mp[mp_id]
            matched_kps.add(kp)
            kf.map_point_ids[kp] = mp_id
            mp.add_observation(kf.id, kp,
                               features.descriptors[kp].astype(np.float64))
        valid = self._valid_depth_mask(kf.depths_m)
        for i in np.flatnonzero(valid):
            if int(i) not in matched_kps:
                self._create_map_point(kf, int(i))
        self._set_bow(kf)
        self._detect_loop_candidates(kf)
        self._cull_map_points(kf.id)
        self.reference_kf = kf
        self._frames_since_kf = 0
        return kf

    def _cull_map_points(self, current_kf_id):
        cfg = self.config
        stale = []
        for mp in self.map_points.values():
            if mp.visible < cfg.cull_min_visible:
                continue
            if mp.found / mp.visible >= cfg.cull_found_ratio:
                continue
            if mp.last_kf_observed > current_kf_id - cfg.cull_kf_window:
                continue
            stale.append(mp.id)
        for mp_id in stale:
            mp = self.map_points.pop(mp_id)
            for kf_id, kp in mp.observations:
                self.keyframes[kf_id].map_point_ids.pop(kp, None)

    # -- relocalization ------------------------------------------------------

    def relocalize(self, features: FrameFeatures):
        """BoW query over all keyframes; PnP against the top candidates."""
        if self.vocab is None or not self.keyframes:
            return None
        query = self.vocab.transform(features.descriptors)
        scored = sorted(
            ((vocabulary.similarity(query, kf.bow), kf) for kf in self.keyframes),
            key=lambda x: (-x[0], x[1].id))
        desc = features.descriptors.astype(np.float64)
        for score, kf in scored[:5]:
            if score <= 0.0:
                continue
            ids = sorted(set(kf.map_point_ids.values()))
            ids = [m for m in ids if m in self.map_points]
            if len(ids) < 4:
                continue
            _, mp_desc = self._map_point_matrix(ids)
            try:
                matches = matching.knn_match(desc, mp_desc, k=2,
                                             ratio=self.config.knn_ratio)
            except matching.TooFewCandidates:
                continue
            pairs = self._dedupe(matches, ids)
            if len(pairs) < 4:
                continue
            pts = np.array([self.map_points[ids[j]].position
                            for _, j in pairs])
            uvs = np.array([features.keypoints[i] for i, _ in pairs],
                           dtype=np.float64)
            try:
                pose, mask = geometry.pnp_ransac(
                    pts, uvs, self.K, iters=self.config.ransac_iters,
                    reproj_thresh=self.config.reproj_thresh,
                    min_inliers=self.config.min_track_inliers,
                    seed=self.config.seed)
            except geometry.GeometryError:
                continue
            if int(mask.sum()) >= self.config.min_track_inliers:
                self.reference_kf = kf
                return pose
        return None

    # -- helpers -------------------------------------------------------------

    def _valid_depth_mask(self, depths_m):
        d = np.asarray(depths_m, dtype=np.float64)
        return (np.isfinite(d) & (d >= self.config.depth_min)
                & (d <= self.config.depth_max))

    def _create_map_point(self, kf: KeyFrame, kp_index):
        z = kf.depths_m[kp_index]
        u, v = kf.features.keypoints[kp_index]
        p_cam = np.array([(u - self.K.cx) * z / self.K.fx,
                          (v - self.K.cy) * z / self.K.fy, z])
        p_world = kf.pose_cw.inverse().apply(p_cam)
        mp = MapPoint(self._next_mp_id, p_world,
                      kf.features.descriptors[kp_index].astype(np.float64))
        self._next_mp_id += 1
        mp.add_observation(kf.id, kp_index,
                           kf.features.descriptors[kp_index].astype(np.float64))
        self.map_points[mp.id] = mp
        kf.map_point_ids[kp_index] = mp.id
        return mp

    def _reference_point_ids(self):
        if self.reference_kf is None:
            return []
        return sorted(m for m in set(self.reference_kf.map_point_ids.values())
                      if m in self.map_points)

    def _local_map_ids(self):
        """Reference keyframe's points plus its most covisible keyframes'."""
        if self.reference_kf is None:
            return []
        ref_ids = set(self._reference_point_ids())
        shared = []
        for kf in self.keyframes:
            if kf.id == self.reference_kf.id:
                continue
            n = len(ref_ids & set(kf.map_point_ids.values()))
            if n > 0:
                shared.append((n, kf))
        shared.sort(key=lambda x: (-x[0], x[1].id))
        ids = set(ref_ids)
        for _, kf in shared[:self.config.covisible_keyframes]:
            ids.update(m for m in kf.map_point_ids.values()
                       if m in self.map_points)
        return sorted(ids)

    def _map_point_matrix(self, ids):
        if not ids:
            return [], np.zeros((0, 384))
        return list(ids), np.array([self.map_points[m].descriptor
                                    for m in ids])

    def _update_point_stats(self, pose, matched_ids, inlier_ids):
        inl = set(inlier_ids)
        local = set(self._local_map_ids())
        pts_ids = sorted(local)
        if pts_ids:
            pts = np.array([self.map_points[m].position for m in pts_ids])
            uv, z = geometry.project(pose, pts, self.K)
            vis = ((z > 0) & (uv[:, 0] >= 0) & (uv[:, 0] < self.K.width)
                   & (uv[:, 1] >= 0) & (uv[:, 1] < self.K.height))
            for m, v in zip(pts_ids, vis):
                if v:
                    self.map_points[m].visible += 1
                    if m in inl:
                        self.map_points[m].found += 1

    def _set_bow(self, kf: KeyFrame):
        if self.vocab is not None:
            kf.bow = self.vocab.transform(kf.features.descriptors)

    def _detect_loop_candidates(self, kf: KeyFrame):
        """Log high-similarity non-neighbor keyframes; no correction."""
        if self.vocab is None:
            return
        neighbors = {kf.id - 1, kf.id - 2, kf.id}
        for other in self.keyframes:
            if other.id in neighbors:
                continue
            score = vocabulary.similarity(kf.bow, other.bow)
            if score > self.config.loop_sim_threshold:
                self.loop_candidates.append(
                    LoopCandidate(kf.timestamp, other.id, score))
