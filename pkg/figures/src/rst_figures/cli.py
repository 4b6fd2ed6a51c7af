"""Script entry point: input CSV paths in, one image path out."""

from __future__ import annotations

import argparse
import sys

from rst_figures.render import KINDS, FigureSpec, render
from rst_figures.schemas import SchemaError

_INPUT_FLAGS = ("points", "tree", "straightness", "trace", "deviation", "tail")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rst-figures",
        description="Regenerate simulator figures from CSV exports. "
        "tree: --points --tree | cones: --points --tree --straightness | "
        "lenses: --trace | deviation: --deviation | tails: --tail",
    )
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--out", required=True, help="output image path (.png)")
    for flag in _INPUT_FLAGS:
        p.add_argument(f"--{flag}", help=f"{flag} CSV path")
    p.add_argument("--n-cones", type=int, help="number of highlighted subtrees")
    p.add_argument("--aperture-multiplier", type=float, help="cone aperture scale factor")
    p.add_argument("--max-steps", type=int, help="trace steps drawn in the lens diagram")
    p.add_argument("--shape-exponent", type=float, help="envelope exponent for tail plots")
    p.add_argument("--linear-y", action="store_true", help="disable the log y axis on tail plots")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    inputs = {k: getattr(args, k) for k in _INPUT_FLAGS if getattr(args, k)}
    style = {}
    if args.n_cones is not None:
        style["n_cones"] = args.n_cones
    if args.aperture_multiplier is not None:
        style["aperture_multiplier"] = args.aperture_multiplier
    if args.max_steps is not None:
        style["max_steps"] = args.max_steps
    if args.shape_exponent is not None:
        style["shape_exponent"] = args.shape_exponent
    if args.linear_y:
        style["log_y"] = False
    try:
        out = render(FigureSpec(kind=args.kind, inputs=inputs, out=args.out, style=style))
    except (SchemaError, KeyError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
