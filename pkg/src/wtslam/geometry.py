"""SE(3) machinery, depth backprojection, robust pose estimation.

Conventions: poses stored as world-to-camera transforms T_cw for
optimization (x_cam = R @ x_world + t); trajectory export converts to
camera-to-world. Pose updates use a left-multiplied twist increment
exp(delta) * T with twist ordered (translation, rotation).
"""

from __future__ import annotations

import cv2
import numpy as np
from scipy.spatial.transform import Rotation

DEPTH_MIN = 0.1
DEPTH_MAX = 10.0
DEFAULT_RANSAC_ITERS = 100
DEFAULT_REPROJ_THRESH = 3.0
DEFAULT_MIN_INLIERS = 10
DEFAULT_HUBER_DELTA = 2.45  # sqrt(5.99), 95% chi-square gate for 2-dof residuals
DEFAULT_SEED = 42


class GeometryError(Exception):
    pass


class InvalidDepth(GeometryError):
    pass


class DepthOutOfRange(GeometryError):
    pass


class DegenerateConfiguration(GeometryError):
    pass


class NotEnoughInliers(GeometryError):
    pass


class DegenerateInput(GeometryError):
    pass


class NumericalFailure(GeometryError):
    pass


def skew(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


class SE3:
    """Rigid transform with 3x3 rotation matrix R and translation t."""

    __slots__ = ("R", "t")

    def __init__(self, R=None, t=None):
        self.R = np.eye(3) if R is None else np.asarray(R, dtype=np.float64)
        self.t = np.zeros(3) if t is None else np.asarray(t, dtype=np.float64).ravel()

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_quat(cls, quat_xyzw, t):
        return cls(Rotation.from_quat(quat_xyzw).as_matrix(), t)

    def quat_xyzw(self):
        return Rotation.from_matrix(self.R).as_quat()

    def __matmul__(self, other):
        if isinstance(other, SE3):
            return SE3(self.R @ other.R, self.R @ other.t + self.t)
        return NotImplemented

    def inverse(self):
        return SE3(self.R.T, -self.R.T @ self.t)

    def apply(self, points):
        """Transform (N,3) or (3,) points."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.R.T + self.t

    def orthonormalize(self):
        """Project R back onto SO(3); call after long composition chains."""
        u, _, vt = np.linalg.svd(self.R)
        R = u @ vt
        if np.linalg.det(R) < 0:
            R = u @ np.diag([1.0, 1.0, -1.0]) @ vt
        return SE3(R, self.t)

    def copy(self):
        return SE3(self.R.copy(), self.t.copy())


def se3_exp(twist):
    """Exponential map: 6-vector (translation, rotation) -> SE3."""
    xi = np.asarray(twist, dtype=np.float64).ravel()
    rho, phi = xi[:3], xi[3:6]
    theta = np.linalg.norm(phi)
    W = skew(phi)
    if theta < 1e-8:
        # Taylor branch
        R = np.eye(3) + W + 0.5 * (W @ W)
        V = np.eye(3) + 0.5 * W + (W @ W) / 6.0
    else:
        s, c = np.sin(theta), np.cos(theta)
        R = np.eye(3) + (s / theta) * W + ((1 - c) / theta**2) * (W @ W)
        V = (np.eye(3) + ((1 - c) / theta**2) * W
             + ((theta - s) / theta**3) * (W @ W))
    return SE3(R, V @ rho)


def se3_log(T: SE3):
    """Logarithm map: SE3 -> 6-vector (translation, rotation)."""
    rotvec = Rotation.from_matrix(T.R).as_rotvec()
    theta = np.linalg.norm(rotvec)
    W = skew(rotvec)
    if theta < 1e-8:
        Vinv = np.eye(3) - 0.5 * W + (W @ W) / 12.0
    else:
        half = theta / 2.0
        cot = 1.0 / np.tan(half)
        Vinv = (np.eye(3) - 0.5 * W
                + ((1.0 - half * cot) / theta**2) * (W @ W))
    return np.concatenate([Vinv @ T.t, rotvec])


def backproject(pixel, depth_raw, K, depth_scale,
                depth_min=DEPTH_MIN, depth_max=DEPTH_MAX):
    """Pinhole backprojection of a pixel with raw depth into camera frame."""
    u, v = float(pixel[0]), float(pixel[1])
    if not np.isfinite(depth_raw) or depth_raw <= 0:
        raise InvalidDepth(f"depth {depth_raw} at ({u},{v})")
    z = float(depth_raw) / float(depth_scale)
    if not (depth_min <= z <= depth_max):
        raise DepthOutOfRange(f"z={z:.3f}m outside [{depth_min},{depth_max}]")
    x = (u - K.cx) * z / K.fx
    y = (v - K.cy) * z / K.fy
    return np.array([x, y, z])


def project(T_cw: SE3, points_world, K):
    """Project world points through a world-to-camera pose.

    Returns (pixels (N,2), depths (N,)); points behind the camera get
    negative depth and garbage pixels — callers gate on depth.
    """
    p = T_cw.apply(np.atleast_2d(points_world))
    z = p[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * p[:, 0] / z + K.cx
        v = K.fy * p[:, 1] / z + K.cy
    return np.stack([u, v], axis=1), z


def _reprojection_residuals(T_cw, points, pixels, K):
    uv, z = project(T_cw, points, K)
    r = uv - pixels
    return r, z


def pnp_ransac(points_world, pixels, K, iters=DEFAULT_RANSAC_ITERS,
               reproj_thresh=DEFAULT_REPROJ_THRESH,
               min_inliers=DEFAULT_MIN_INLIERS, seed=DEFAULT_SEED,
               refine=True):
    """Robust world-to-camera pose from 3D-2D correspondences.

    EPnP hypotheses on random minimal sets, inliers counted under the
    reprojection threshold, best pose refined on its inliers.
    Returns (SE3, inlier_mask). Deterministic for a fixed seed.
    """
    P = np.ascontiguousarray(np.atleast_2d(points_world), dtype=np.float64)
    uv = np.ascontiguousarray(np.atleast_2d(pixels), dtype=np.float64)
    n = len(P)
    if n < 4:
        raise DegenerateConfiguration(f"{n} correspondences < 4")
    if np.linalg.matrix_rank(P - P.mean(axis=0), tol=1e-9) < 2:
        raise DegenerateConfiguration("collinear 3D points")
    Kmat = K.as_matrix()
    rng = np.random.RandomState(seed)
    sample_size = min(6, n)
    best_mask = None
    best_count = 0
    best_pose = None
    for _ in range(iters):
        idx = rng.choice(n, size=sample_size, replace=False)
        ok, rvec, tvec = cv2.solvePnP(
            P[idx], uv[idx], Kmat, None, flags=cv2.SOLVEPNP_EPNP)
        if not ok:
            continue
        T = SE3(cv2.Rodrigues(rvec)[0], tvec.ravel())
        r, z = _reprojection_residuals(T, P, uv, K)
        err = np.linalg.norm(r, axis=1)
        mask = (z > 0) & (err < reproj_thresh)
        count = int(mask.sum())
        if count > best_count:
            best_count, best_mask, best_pose = count, mask, T
    if best_pose is None or best_count < max(min_inliers, 4):
        raise NotEnoughInliers(f"best hypothesis had {best_count} inliers")
    if refine:
        refined, _, _, _ = motion_only_ba(best_pose, P[best_mask],
                                          uv[best_mask], K)
        r, z = _reprojection_residuals(refined, P, uv, K)
        err = np.linalg.norm(r, axis=1)
        mask = (z > 0) & (err < reproj_thresh)
        if int(mask.sum()) >= best_count:
            best_pose, best_mask = refined, mask
    return best_pose, best_mask


def motion_only_ba(initial: SE3, points_world, pixels, K,
                   huber_delta=DEFAULT_HUBER_DELTA, max_iters=20):
    """Levenberg-Marquardt refinement of a single pose over fixed 3D points.

    Minimizes the Huber-robustified reprojection error w.r.t. a 6-dof
    left-multiplied twist. Returns (pose, final_cost, inlier_mask,
    converged); the accepted-step cost sequence is non-increasing.
    """
    P = np.atleast_2d(np.asarray(points_world, dtype=np.float64))
    uv = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    T = initial.copy()
    lam = 1e-4
    cost = _robust_cost(T, P, uv, K, huber_delta)
    if not np.isfinite(cost):
        raise NumericalFailure("non-finite initial cost")
    converged = False
    for _ in range(max_iters):
        H, g = _normal_equations(T, P, uv, K, huber_delta)
        accepted = False
        for _ in range(8):
            try:
                delta = np.linalg.solve(H + lam * np.diag(np.diag(H)), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            T_new = (se3_exp(delta) @ T).orthonormalize()
            new_cost = _robust_cost(T_new, P, uv, K, huber_delta)
            if np.isfinite(new_cost) and new_cost < cost:
                T, cost = T_new, new_cost
                lam = max(lam * 0.3, 1e-9)
                accepted = True
                if np.linalg.norm(delta) < 1e-10:
                    converged = True
                break
            lam *= 10.0
        if not accepted or converged:
            converged = converged or not accepted
            break
    r, z = _reprojection_residuals(T, P, uv, K)
    err = np.linalg.norm(r, axis=1)
    inliers = (z > 0) & (err <= 2.0 * huber_delta)
    return T, cost, inliers, converged


def _robust_cost(T, P, uv, K, delta):
    r, z = _reprojection_residuals(T, P, uv, K)
    e = np.linalg.norm(r, axis=1)
    e = np.where(z > 0, e, np.inf)
    quad = e <= delta
    cost = np.where(quad, 0.5 * e**2, delta * (e - 0.5 * delta))
    # points behind the camera get a large fixed penalty to push them back
    cost = np.where(np.isfinite(cost), cost, 1e6)
    return float(np.sum(cost))


def reprojection_jacobian(T: SE3, point_world, K):
    """2x6 Jacobian of the pixel residual w.r.t. the left twist increment."""
    p = T.apply(point_world)
    x, y, z = p
    Jpi = np.array([
        [K.fx / z, 0.0, -K.fx * x / z**2],
        [0.0, K.fy / z, -K.fy * y / z**2],
    ])
    Jp = np.hstack([np.eye(3), -skew(p)])
    return Jpi @ Jp


def _normal_equations(T, P, uv, K, delta):
    H = np.zeros((6, 6))
    g = np.zeros(6)
    r, z = _reprojection_residuals(T, P, uv, K)
    e = np.linalg.norm(r, axis=1)
    for i in range(len(P)):
        if z[i] <= 0:
            continue
        w = 1.0 if e[i] <= delta else delta / e[i]
        J = reprojection_jacobian(T, P[i], K)
        H += w * (J.T @ J)
        g += w * (J.T @ r[i])
    return H, g


def umeyama_align(P, Q, with_scale=False):
    """Least-squares rigid (optionally similarity) alignment Q ~ s*R*P + t.

    Returns (R, t, s) minimizing sum ||Q_i - (s R P_i + t)||^2.
    """
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    if P.shape != Q.shape or len(P) < 3:
        raise DegenerateInput(f"need >= 3 matched points, got {P.shape}/{Q.shape}")
    mu_p = P.mean(axis=0)
    mu_q = Q.mean(axis=0)
    Pc = P - mu_p
    Qc = Q - mu_q
    if np.linalg.matrix_rank(Pc, tol=1e-12) < 2:
        raise DegenerateInput("source points are collinear or coincident")
    cov = Qc.T @ Pc / len(P)
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    if with_scale:
        var_p = np.sum(Pc**2) / len(P)
        s = float(np.trace(np.diag(D) @ S) / var_p)
    else:
        s = 1.0
    t = mu_q - s * R @ mu_p
    return R, t, s
