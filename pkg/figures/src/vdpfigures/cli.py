"""Script entry point: render one artifact into one image."""
from __future__ import annotations

import argparse
import sys

from .recipe import KINDS, ArtifactError, FigureRecipe, render


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="vdpsync-figure")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--artifact", required=True, help="input CSV artifact")
    ap.add_argument("--out", required=True, help="output image path")
    ap.add_argument("--title", default=None)
    ap.add_argument("--xlim", type=float, nargs=2, default=None)
    ap.add_argument("--ylim", type=float, nargs=2, default=None)
    ap.add_argument("--clim", type=float, nargs=2, default=None)
    args = ap.parse_args(argv)
    recipe = FigureRecipe(
        artifact=args.artifact, kind=args.kind, output=args.out,
        x_range=tuple(args.xlim) if args.xlim else None,
        y_range=tuple(args.ylim) if args.ylim else None,
        color_scale=tuple(args.clim) if args.clim else None,
        title=args.title)
    try:
        path = render(recipe)
    except ArtifactError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
