"""rwtf-export: write RWTF feature sequences.

  rwtf-export synthetic --config scene.json --out DIR
  rwtf-export network --dataset DIR --out DIR [--model REF]
                      [--resolution WxH] [--pair-consecutive]

Exit codes: 0 ok, 2 bad config, 3 data error, 5 model unavailable.
"""

import argparse
import sys

from . import network as N
from . import scene as S
from .synthetic import export_synthetic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MODEL = 5


def build_parser():
    p = argparse.ArgumentParser(prog="rwtf-export")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synthetic", help="export a synthetic scene")
    ps.add_argument("--config", required=True, help="scene JSON config")
    ps.add_argument("--out", required=True)

    pn = sub.add_parser("network", help="export via a dense-matching network")
    pn.add_argument("--dataset", required=True,
                    help="directory of images (or with an rgb/ subdir)")
    pn.add_argument("--out", required=True)
    pn.add_argument("--model", default="default")
    pn.add_argument("--resolution", default="640x480")
    pn.add_argument("--pair-consecutive", action="store_true",
                    help="pair each frame with the next instead of itself")
    return p


def cmd_synthetic(args):
    try:
        scene = S.scene_from_config(args.config)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (S.SceneError, ValueError, KeyError) as e:
        print(f"error: bad scene config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = export_synthetic(scene, args.out)
    print(f"wrote {len(scene.path)} frames to {out}")
    return EXIT_OK


def cmd_network(args):
    try:
        w, h = (int(x) for x in args.resolution.lower().split("x"))
        cfg = N.NetworkAdapterConfig(
            model=args.model, width=w, height=h,
            channel_duplicate=not args.pair_consecutive)
    except (ValueError, N.ExportError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = N.export_from_network(args.dataset, cfg, args.out)
    except N.ModelUnavailable as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MODEL
    except N.ExportError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    print(f"wrote features to {out}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "synthetic":
        return cmd_synthetic(args)
    return cmd_network(args)


if __name__ == "__main__":
    sys.exit(main())
