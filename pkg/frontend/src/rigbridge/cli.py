"""Command line: export a capture into a calibration archive."""

import argparse
import sys

from .errors import BridgeError
from .export import export
from .manifest import from_directories


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="rigbridge",
        description="export multi-camera captures as calibration archives")
    sub = ap.add_subparsers(dest="cmd")
    p = sub.add_parser("export", help="images + poses -> archive")
    p.add_argument("--images", action="append", required=True,
                   help="image directory, one flag per camera")
    p.add_argument("--poses", help="robot trajectory file (copied along)")
    p.add_argument("--out", required=True, help="output archive directory")
    p.add_argument("--model", default="classical",
                   help="reconstruction backend id")
    p.add_argument("--focal", type=float,
                   help="focal length prior in pixels")

    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 1
    if args.cmd != "export":
        ap.print_usage()
        return 1
    try:
        summary = export(from_directories(args.images, args.poses),
                         args.out, model_id=args.model, focal=args.focal)
    except BridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"exported {summary['views']} views, "
          f"{summary['pairs_kept']}/{summary['pairs_tried']} pairs, "
          f"{summary['matches']} matches -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
