"""Command-line figure renderer for harness CSVs.

Exit codes: 0 on success, 1 for bad invocations or figure specs, 2 when a
CSV is missing required columns or has no data (no image file is written).
"""

from __future__ import annotations

import argparse
import json
import sys

from .render import KINDS, FigureSpec, RenderError, render


def build_parser():
    parser = argparse.ArgumentParser(prog="helmplot",
                                     description="render helmfem CSV artifacts")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure")
    p.add_argument("csv", nargs="*", help="input CSV file(s)")
    p.add_argument("--spec", help="JSON figure spec (csv/kind/out/xscale/yscale)")
    p.add_argument("--kind", choices=KINDS, help="figure kind for positional CSVs")
    p.add_argument("--out", help="output image path (PNG/SVG by extension)")
    p.add_argument("--xscale", default="log")
    p.add_argument("--yscale", default="log")
    return parser


def _spec_from_args(args):
    if args.spec:
        try:
            with open(args.spec, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SystemExit(f"bad figure spec: {exc}")
        try:
            return FigureSpec(raw["csv"], raw["kind"], raw["out"],
                              raw.get("xscale", "log"), raw.get("yscale", "log"))
        except KeyError as exc:
            raise SystemExit(f"figure spec is missing the {exc} key")
    if not args.csv or not args.kind or not args.out:
        raise SystemExit("render needs --spec, or positional CSVs with --kind and --out")
    return FigureSpec(list(args.csv), args.kind, args.out, args.xscale, args.yscale)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = _spec_from_args(args)
    except SystemExit as exc:
        print(exc, file=sys.stderr)
        return 1
    except RenderError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 1
    try:
        render(spec)
    except RenderError as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
