"""Command-line entry points: run, ablate, vocab-train, eval, mask-debug."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import cv2
import numpy as np

from . import features as feat
from .dataset_io import (DatasetError, read_feature_file, read_trajectory)
from .evaluation import EvaluationError, ate_rmse
from .pipeline import ConfigError, RunConfig, run_ablation, run_tracking
from .vocabulary import VocabTree, VocabularyError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NO_INIT = 4


def _add_run_args(p):
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--features", default=None,
                   help="RWTF feature directory (default: DATASET/features)")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--vocab", default=None, help="RWTV vocabulary path")
    p.add_argument("--stride", type=int, default=5,
                   help="process every Nth frame, interpolate the rest")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--ratio", type=float, default=0.8,
                   help="KNN ratio-test threshold")
    p.add_argument("--max-dt", type=float, default=0.02)
    p.add_argument("--no-coarse", action="store_true",
                   help="drop the coarse descriptor slice")
    p.add_argument("--no-fine", action="store_true",
                   help="drop the fine descriptor slice")
    p.add_argument("--no-mask", action="store_true",
                   help="disable structure feature masks")
    p.add_argument("--no-ratio-test", action="store_true",
                   help="accept best KNN match without the ratio test")
    p.add_argument("--min-init-points", type=int, default=50)
    p.add_argument("--min-track-inliers", type=int, default=15)


def _config_from_args(args):
    return RunConfig(
        dataset_dir=args.dataset,
        features_dir=args.features,
        output_dir=args.output,
        vocab_path=args.vocab,
        frame_stride=args.stride,
        use_coarse=not args.no_coarse,
        use_fine=not args.no_fine,
        use_mask=not args.no_mask,
        use_knn_ratio=not args.no_ratio_test,
        knn_ratio=args.ratio,
        seed=args.seed,
        max_dt=args.max_dt,
        min_init_points=args.min_init_points,
        min_track_inliers=args.min_track_inliers,
    )


def cmd_run(args):
    if args.from_manifest:
        manifest = json.loads(Path(args.from_manifest).read_text())
        try:
            config = RunConfig(**manifest["config"])
        except (KeyError, TypeError, ConfigError) as e:
            print(f"error: bad manifest: {e}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        try:
            config = _config_from_args(args)
        except ConfigError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        summary = run_tracking(config)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    if not summary.initialized:
        print("error: tracking never initialized", file=sys.stderr)
        return EXIT_NO_INIT
    print(f"frames: {summary.n_frames} processed: {summary.n_processed} "
          f"tracked: {summary.n_tracked} "
          f"({100.0 * summary.tracked_fraction:.1f}%)")
    print(f"artifacts in {summary.output_dir}")
    return EXIT_OK


def cmd_ablate(args):
    try:
        config = _config_from_args(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    rows = run_ablation(config)
    print("config\tate_rmse_m")
    for name, rmse in rows:
        print(f"{name}\t{rmse:.6f}" if rmse is not None else f"{name}\t-")
    return EXIT_OK


def cmd_vocab_train(args):
    feature_files = sorted(Path(args.features).glob("*.rwtf"))
    docs = []
    for f in feature_files:
        ff = read_feature_file(f)
        if len(ff):
            docs.append(ff.descriptors)
    if not docs:
        print(f"error: no usable RWTF files in {args.features}",
              file=sys.stderr)
        return EXIT_DATA
    try:
        tree = VocabTree.train(docs, k=args.k, depth=args.depth,
                               seed=args.seed)
    except VocabularyError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    tree.save(args.out)
    print(f"vocabulary: {tree.word_count} words, k={tree.k} "
          f"depth={tree.depth} nodes={len(tree.nodes)} -> {args.out}")
    return EXIT_OK


def cmd_eval(args):
    try:
        est = read_trajectory(args.est)
        gt = read_trajectory(args.gt)
        report = ate_rmse(est, gt, max_dt=args.max_dt,
                          with_scale=args.with_scale)
    except (DatasetError, EvaluationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    text = report.format()
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text)
    return EXIT_OK


def cmd_mask_debug(args):
    img = cv2.imread(args.image, cv2.IMREAD_GRAYSCALE)
    if img is None:
        print(f"error: cannot read image {args.image}", file=sys.stderr)
        return EXIT_DATA
    params = feat.MaskParams(
        canny_lo=args.canny_lo, canny_hi=args.canny_hi,
        hough_threshold=args.hough_threshold,
        hough_min_len=args.hough_min_len, hough_max_gap=args.hough_max_gap,
        line_width=args.line_width)
    mask = feat.compute_feature_mask(img, params)
    mask_img = (mask.astype(np.uint8)) * 255
    cv2.imwrite(args.out, mask_img)
    overlay = cv2.cvtColor(img, cv2.COLOR_GRAY2BGR)
    overlay[mask] = (0.5 * overlay[mask] + np.array([0, 127.5, 0])).astype(
        np.uint8)
    side = np.concatenate(
        [cv2.cvtColor(mask_img, cv2.COLOR_GRAY2BGR), overlay], axis=1)
    stem = Path(args.out)
    cv2.imwrite(str(stem.with_name(stem.stem + "_overlay" + stem.suffix)),
                side)
    print(f"mask coverage: {100.0 * mask.mean():.2f}% -> {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wtslam",
        description="Keyframe RGB-D tracking with hierarchical descriptors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="track a sequence and write trajectory")
    _add_run_args(p)
    p.add_argument("--from-manifest", default=None,
                   help="re-run an exact configuration from a manifest.json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="run the five ablation configurations")
    _add_run_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("vocab-train", help="train a vocabulary from RWTF files")
    p.add_argument("--features", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_vocab_train)

    p = sub.add_parser("eval", help="ATE RMSE of an estimated trajectory")
    p.add_argument("est")
    p.add_argument("gt")
    p.add_argument("--max-dt", type=float, default=0.02)
    p.add_argument("--with-scale", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mask-debug", help="write the feature mask of an image")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    p.add_argument("--canny-lo", type=float, default=50.0)
    p.add_argument("--canny-hi", type=float, default=150.0)
    p.add_argument("--hough-threshold", type=int, default=50)
    p.add_argument("--hough-min-len", type=float, default=50.0)
    p.add_argument("--hough-max-gap", type=float, default=10.0)
    p.add_argument("--line-width", type=int, default=20)
    p.set_defaults(func=cmd_mask_debug)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
