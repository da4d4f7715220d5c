"""Batch figure rendering.

`report --in DIR --out DIR [--kinds LIST]` scans DIR for experiment CSVs,
decides which figure kinds each can feed from its experiment column, and
renders one image plus caption sidecar per (CSV, kind) pair. Exit codes
mirror the producing CLI: 0 success, 2 config or schema error, 4 IO error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import pandas as pd

from .figures import KINDS, EmptyInputError, FigureSpec, SchemaError, render

# Default kind(s) per experiment tag; moments CSVs additionally feed the
# trend figure when they hold q = 0.5 rows at two or more sizes.
_TAG_KINDS = {
    "moments": ("moment-q",),
    "ratio": ("root-x-trend",),
    "tails": ("tail-bounds",),
    "walks": ("walk-fit",),
    "chaos": ("chaos-hist",),
    "fieldmax": ("covariance-lag",),
}


def _parse_kinds(text: str | None) -> tuple[str, ...]:
    if text is None:
        return KINDS
    kinds = tuple(k.strip() for k in text.split(",") if k.strip())
    for kind in kinds:
        if kind not in KINDS:
            raise ValueError(
                f"unknown figure kind '{kind}'; choose from {', '.join(KINDS)}")
    if not kinds:
        raise ValueError("--kinds given but empty")
    return kinds


def _kinds_for(path: Path) -> tuple[str, ...]:
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise EmptyInputError(f"{path.name}: no rows to plot") from None
    if frame.empty:
        raise EmptyInputError(f"{path.name}: no rows to plot")
    if "experiment" not in frame.columns:
        raise SchemaError(f"{path.name}: missing column 'experiment'")
    tag = str(frame["experiment"].iloc[0])
    kinds = _TAG_KINDS.get(tag, ())
    if tag == "moments" and "q" in frame.columns:
        half = frame[frame["q"].astype(float) == 0.5]
        if half["x"].nunique() >= 2:
            kinds = kinds + ("root-x-trend",)
    return kinds


def _plan(in_dir: Path, out_dir: Path, kinds: tuple[str, ...],
          log_x: bool, log_y: bool, dpi: int) -> list[FigureSpec]:
    specs = []
    for path in sorted(in_dir.glob("*.csv")):
        for kind in _kinds_for(path):
            if kind not in kinds:
                continue
            specs.append(FigureSpec(
                kind=kind, inputs=(path,),
                output=out_dir / f"{kind}-{path.stem}.png",
                log_x=log_x, log_y=log_y, dpi=dpi))
    return specs


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="report",
        description="Render publication-style figures from experiment "
                    "CSV outputs.")
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="directory holding experiment CSV files")
    parser.add_argument("--out", dest="out_dir", required=True,
                        help="directory to write images and captions into")
    parser.add_argument("--kinds",
                        help="comma list from: " + ", ".join(KINDS))
    parser.add_argument("--log-x", action="store_true",
                        help="force a log x axis on every figure")
    parser.add_argument("--log-y", action="store_true",
                        help="force a log y axis on every figure")
    parser.add_argument("--dpi", type=int, default=120)
    args = parser.parse_args(argv)
    try:
        kinds = _parse_kinds(args.kinds)
        in_dir = Path(args.in_dir)
        if not in_dir.is_dir():
            raise ValueError(f"input directory {in_dir} does not exist")
        specs = _plan(in_dir, Path(args.out_dir), kinds,
                      args.log_x, args.log_y, args.dpi)
        if not specs:
            raise ValueError(
                f"no renderable CSV inputs in {in_dir} for kinds "
                + ", ".join(kinds))
        for spec in specs:
            result = render(spec)
            print(f"report: wrote {result.image} "
                  f"({spec.kind} from {spec.inputs[0].name})")
    except (SchemaError, EmptyInputError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
