"""Command line front end for rendering benchmark figures."""

from __future__ import annotations

import argparse
import sys

from .figures import FORMATS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots", description="Render benchmark sweep CSVs to static figures."
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    p = sub.add_parser("render", help="render one figure per sweep axis in a CSV")
    p.add_argument("--csv", required=True, help="benchmark CSV to read")
    p.add_argument("--out", required=True, help="directory for the output images")
    p.add_argument("--format", choices=list(FORMATS), default="png", help="image format")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    spec = FigureSpec(input_csv=args.csv, out_dir=args.out, fmt=args.format)
    try:
        paths = render(spec)
    except SchemaError as exc:
        print("schema error: %s" % exc, file=sys.stderr)
        return 1
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    for path in paths:
        print("wrote %s" % path)
    return 0


def entry() -> None:
    sys.exit(main())
