"""Command line entry point: plot <run-dir> --fig {ada|overall|lockin} --out <path>."""

import argparse
import sys
from pathlib import Path

from .figures import plot_adaptation, plot_lockin, plot_overall
from .io import SchemaError, load_bundle

_FIGURES = {"ada": plot_adaptation, "overall": plot_overall, "lockin": plot_lockin}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plot",
                                     description="render figures from a cfres run directory")
    parser.add_argument("run_dir", type=Path)
    parser.add_argument("--fig", choices=sorted(_FIGURES), required=True)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--mode", choices=["mean", "seeds"], default="mean",
                        help="seed-averaged curves with translucent seeds, or per-seed lines")
    args = parser.parse_args(argv)
    try:
        bundle = load_bundle(args.run_dir)
        _FIGURES[args.fig](bundle, args.out, mode=args.mode)
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
