"""Command line interface: thinddp-plots render --kind <k> --in <csv...> --out <img>.

Exit codes: 0 success, 1 usage error, 2 schema mismatch or unreadable input.
"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, PlotSpec, SchemaError, render


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="thinddp-plots", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    ren = sub.add_parser("render", help="render one figure from harness CSV output")
    ren.add_argument("--kind", choices=KINDS, required=True)
    ren.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="CSV")
    ren.add_argument("--out", required=True, help="output image path")
    ren.add_argument("--title", default=None)
    ren.add_argument("--value", default=None, help="metric column for boxplots")
    ren.add_argument("--x-axis", choices=("size", "param"), default=None,
                     help="curves orientation: expected total vs size (default) "
                          "or shared/specific counts vs thinning parameter")
    ren.add_argument("--xlabel", default=None)
    ren.add_argument("--ylabel", default=None)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 1
    labels = {}
    if args.title:
        labels["title"] = args.title
    if args.value:
        labels["value"] = args.value
    if args.x_axis:
        labels["x_axis"] = args.x_axis
    if args.xlabel:
        labels["x"] = args.xlabel
    if args.ylabel:
        labels["y"] = args.ylabel
    try:
        spec = PlotSpec(tuple(args.inputs), args.kind, args.out, labels)
        render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
