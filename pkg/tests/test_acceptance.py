"""Acceptance suite: one test per release criterion, each printing a
pass/fail line. Run with `pytest tests/test_acceptance.py -s` to see the
per-criterion report."""

import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from wtslam import features as F
from wtslam import geometry as G
from wtslam import matching as M
from wtslam import synthetic as S
from wtslam import vocabulary as V
from wtslam.dataset_io import CameraIntrinsics, read_trajectory
from wtslam.evaluation import ate_rmse, interpolate_trajectory
from wtslam.pipeline import RunConfig, run_ablation, run_tracking

K = CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480)


def report(name, ok):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    assert ok, name


def test_synthetic_end_to_end(tmp_path):
    """200 landmarks, 50-pose path, noise 0.01: >=98% tracked, ATE < 1 cm,
    under 60 s."""
    t0 = time.time()
    scene = S.make_scene(n_landmarks=200, n_poses=50, noise_sigma=0.01, seed=7)
    S.write_scene_dataset(scene, tmp_path / "ds")
    summary = run_tracking(RunConfig(dataset_dir=str(tmp_path / "ds"),
                                     output_dir=str(tmp_path / "run"),
                                     frame_stride=1))
    est = read_trajectory(tmp_path / "run" / "trajectory.txt")
    gt = read_trajectory(tmp_path / "ds" / "groundtruth.txt")
    rmse = ate_rmse(est, gt).rmse
    elapsed = time.time() - t0
    ok = (summary.initialized and summary.tracked_fraction >= 0.98
          and rmse < 0.01 and elapsed < 60.0)
    print(f"  tracked {summary.n_tracked}/{summary.n_processed}, "
          f"ATE RMSE {rmse:.2e} m, {elapsed:.1f}s")
    report("synthetic end-to-end oracle", ok)


def test_coordinate_mapping_and_assembly():
    ok = True
    ok &= F.map_coarse_to_image(0, 0, 640, 480) == (0, 0)
    ok &= F.map_coarse_to_image(3, 4, 640, 480) == (24, 32)
    ok &= F.map_coarse_to_image(79, 59, 640, 480) == (632, 472)
    ok &= F.map_fine_to_image(10, 10, 1.5, -0.5, 640, 480)[:2] == (83.0, 79.0)
    ok &= F.map_fine_to_image(0, 0, -2.5, -2.5, 640, 480) == (0.0, 0.0, True)
    d, _ = F.assemble_descriptor(np.ones(256), np.ones(128))
    ok &= bool(np.allclose(d, 1 / np.sqrt(384), atol=1e-6))
    rng = np.random.default_rng(0)
    for _ in range(100):
        gx = int(rng.integers(0, 80))
        gy = int(rng.integers(0, 60))
        u, v, _ = F.map_fine_to_image(gx, gy, 0.0, 0.0, 640, 480)
        ok &= (u, v) == F.map_coarse_to_image(gx, gy, 640, 480)
    report("coordinate mapping / descriptor assembly unit suite", bool(ok))


def test_geometry_oracles():
    rng = np.random.default_rng(1)
    ok = True
    # Umeyama: 1000 random rigid transforms recovered to 1e-9
    for _ in range(1000):
        P = rng.standard_normal((10, 3))
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        R0 = Rotation.from_rotvec(axis * rng.uniform(0, 3.0)).as_matrix()
        t0 = rng.uniform(-5, 5, 3)
        R, t, _ = G.umeyama_align(P, P @ R0.T + t0)
        ok &= float(max(np.max(np.abs(R - R0)), np.max(np.abs(t - t0)))) < 1e-9
    # se3 exp/log round trip
    for _ in range(1000):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        xi = np.concatenate([rng.uniform(-5, 5, 3),
                             axis * rng.uniform(0, np.pi - 0.1)])
        ok &= float(np.max(np.abs(G.se3_log(G.se3_exp(xi)) - xi))) < 1e-9
    # PnP with 30% outliers to 1e-3
    for trial in range(5):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        T = G.SE3(Rotation.from_rotvec(axis * 0.3).as_matrix(),
                  rng.uniform(-0.5, 0.5, 3))
        cam = np.stack([rng.uniform(-2, 2, 60), rng.uniform(-1.5, 1.5, 60),
                        rng.uniform(2.5, 6, 60)], axis=1)
        world = T.inverse().apply(cam)
        uv = np.stack([K.fx * cam[:, 0] / cam[:, 2] + K.cx,
                       K.fy * cam[:, 1] / cam[:, 2] + K.cy], axis=1)
        bad = rng.choice(60, 18, replace=False)
        uv[bad] += rng.uniform(40, 150, (18, 2)) * rng.choice([-1, 1], (18, 2))
        T_est, mask = G.pnp_ransac(world, uv, K, seed=42)
        dR = np.linalg.norm(Rotation.from_matrix(T_est.R @ T.R.T).as_rotvec())
        ok &= dR < 1e-3 and float(np.linalg.norm(T_est.t - T.t)) < 1e-3
        ok &= not mask[bad].any()
    # BA Jacobian vs central differences at 100 random states
    for _ in range(100):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        T = G.SE3(Rotation.from_rotvec(axis * rng.uniform(0, 0.5)).as_matrix(),
                  rng.uniform(-1, 1, 3))
        pt = T.inverse().apply(np.array([rng.uniform(-1, 1),
                                         rng.uniform(-1, 1),
                                         rng.uniform(2, 5)]))
        J = G.reprojection_jacobian(T, pt, K)
        h = 1e-6
        J_num = np.zeros((2, 6))
        for a in range(6):
            d = np.zeros(6)
            d[a] = h
            up, _ = G.project(G.se3_exp(d) @ T, pt, K)
            um, _ = G.project(G.se3_exp(-d) @ T, pt, K)
            J_num[:, a] = (up[0] - um[0]) / (2 * h)
        ok &= float(np.max(np.abs(J - J_num))
                    / max(1.0, float(np.max(np.abs(J))))) < 1e-4
    report("geometry oracle suite", bool(ok))


def test_matching_oracles():
    rng = np.random.default_rng(2)
    ok = True
    # equality with exhaustive search up to 200x200
    for na, nb in [(50, 80), (200, 200)]:
        A = rng.standard_normal((na, 384))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        B = rng.standard_normal((nb, 384))
        B /= np.linalg.norm(B, axis=1, keepdims=True)
        ms = M.knn_match(A, B, ratio=0.9)
        d = np.linalg.norm(A[:, None] - B[None, :], axis=2)
        for m in ms:
            ok &= m.index_b == int(np.argmin(d[m.index_a]))
            srt = np.sort(d[m.index_a])
            ok &= srt[0] < 0.9 * srt[1]
    # equidistant-duplicate rejection 100%
    for _ in range(100):
        q = rng.standard_normal(384)
        q /= np.linalg.norm(q)
        eps = np.zeros(384)
        eps[int(rng.integers(0, 384))] = 1e-3
        ok &= M.knn_match([q], [q + eps, q - eps], ratio=0.8) == []
    # scale invariance of selected pairs on 100 random corpora
    for _ in range(100):
        A = rng.standard_normal((20, 384))
        B = rng.standard_normal((25, 384))
        s = float(rng.uniform(0.1, 10))
        base = {(m.index_a, m.index_b) for m in M.knn_match(A, B)}
        scaled = {(m.index_a, m.index_b) for m in M.knn_match(A, B * s)}
        ok &= base == scaled
    report("matching oracle suite", bool(ok))


def test_vocabulary_suite(tmp_path):
    rng = np.random.default_rng(3)
    docs = [rng.standard_normal((150, 384)) for _ in range(8)]
    ok = True
    t1 = V.VocabTree.train(docs, k=4, depth=2, seed=6)
    t2 = V.VocabTree.train(docs, k=4, depth=2, seed=6)
    p1, p2, p3 = (tmp_path / n for n in ("a.rwtv", "b.rwtv", "c.rwtv"))
    t1.save(p1)
    t2.save(p2)
    ok &= p1.read_bytes() == p2.read_bytes()
    V.VocabTree.load(p1).save(p3)
    ok &= p1.read_bytes() == p3.read_bytes()
    bow = t1.transform(rng.standard_normal((30, 384)))
    ok &= abs(V.similarity(bow, bow) - 1.0) <= 1e-6
    ok &= V.similarity({1: 1.0}, {2: 1.0}) == 0.0
    # flat tree vs brute-force nearest centroid on 1e4 descriptors
    flat = V.VocabTree.train(docs, k=6, depth=1, seed=1)
    cents = {n.word_id: n.centroid for n in flat.nodes if n.word_id >= 0}
    ids = sorted(cents)
    C = np.array([cents[i] for i in ids])
    Q = rng.standard_normal((10_000, 384))
    brute = [ids[j] for j in np.argmin(
        np.sum(Q**2, 1)[:, None] + np.sum(C**2, 1)[None, :] - 2 * Q @ C.T,
        axis=1)]
    got = [flat.word_of(q) for q in Q]
    ok &= got == brute
    report("vocabulary suite", bool(ok))


def test_mask_suite():
    ok = True
    card = np.full((480, 640), 255, np.uint8)
    card[:, 100] = 0
    mask = F.compute_feature_mask(card)
    cols = np.flatnonzero(mask.any(axis=0))
    ok &= cols.min() >= 89 and cols.max() <= 111
    single = F.rasterize_segments([(100, 0, 100, 479)], (480, 640), line_width=20)
    widths = single[100:380].sum(axis=1)
    ok &= bool((widths >= 19).all() and (widths <= 21).all())
    ok &= not F.compute_feature_mask(np.full((480, 640), 77, np.uint8)).any()
    rng = np.random.default_rng(4)
    kps = np.stack([rng.uniform(0, 639, 120), rng.uniform(0, 479, 120)], 1)
    ff = __import__("wtslam").FrameFeatures(
        0, kps.astype(np.float32),
        rng.standard_normal((120, 384)).astype(np.float32))
    out, fb = F.filter_keypoints(ff, np.ones((480, 640), bool), fallback_min=0)
    ok &= not fb and np.array_equal(out.keypoints, ff.keypoints)
    _, fb = F.filter_keypoints(ff, np.zeros((480, 640), bool), fallback_min=50)
    ok &= fb
    out, fb = F.filter_keypoints(ff, np.zeros((480, 640), bool), fallback_min=0)
    ok &= not fb and len(out) == 0
    report("feature mask suite", bool(ok))


def test_ate_suite():
    from wtslam.dataset_io import Pose
    rng = np.random.default_rng(5)
    gt = [Pose(i * 0.1, rng.standard_normal(3), [0, 0, 0, 1])
          for i in range(20)]
    R0 = Rotation.from_rotvec([0.4, -0.1, 0.7]).as_matrix()
    est = [Pose(p.timestamp, R0 @ p.translation + np.array([1.0, 2.0, -3.0]),
                p.quaternion) for p in gt]
    ok = ate_rmse(est, gt).rmse <= 1e-9
    out, _ = interpolate_trajectory(gt, [p.timestamp for p in gt])
    ok &= all(np.allclose(a.translation, b.translation, atol=1e-12)
              for a, b in zip(out, gt))
    # 4-point hand oracle: unit square with one displaced corner
    import tests.test_evaluation as te
    gt_pts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float)
    est_pts = gt_pts.copy()
    est_pts[2] += [0.1, 0, 0]
    Rh, th = te.horn_alignment(est_pts, gt_pts)
    oracle = float(np.sqrt(np.mean(
        np.linalg.norm(gt_pts - (est_pts @ Rh.T + th), axis=1) ** 2)))
    got = ate_rmse(te.traj(est_pts), te.traj(gt_pts)).rmse
    ok &= abs(got - oracle) <= 1e-9
    report("ATE suite", bool(ok))


def test_run_determinism(tmp_path):
    scene = S.make_scene(n_landmarks=120, n_poses=15, noise_sigma=0.01, seed=9)
    S.write_scene_dataset(scene, tmp_path / "ds")
    outs = []
    for name in ("a", "b"):
        run_tracking(RunConfig(dataset_dir=str(tmp_path / "ds"),
                               output_dir=str(tmp_path / name),
                               frame_stride=1))
        outs.append((tmp_path / name / "trajectory.txt").read_bytes())
    report("run determinism (byte-identical trajectories)", outs[0] == outs[1])


def test_ablation_failure_pattern(tmp_path):
    scene = S.make_scene(n_landmarks=150, n_poses=20, noise_sigma=0.01,
                         seed=13, constant_fine=True)
    S.write_scene_dataset(scene, tmp_path / "ds")
    rows = dict(run_ablation(RunConfig(dataset_dir=str(tmp_path / "ds"),
                                       output_dir=str(tmp_path / "abl"),
                                       frame_stride=1)))
    ok = rows["fine_only"] is None and rows["full"] is not None
    print(f"  ablation: fine_only={rows['fine_only']}, full={rows['full']}")
    report("ablation failure pattern (fine-only loses, full completes)", ok)
