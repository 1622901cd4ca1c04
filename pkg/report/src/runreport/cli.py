"""Render every recognized artifact in a data directory."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import (render_crossplay, render_learning_curves,
                      render_population_treemap, render_sps_scaling,
                      render_zsc_bars)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="runreport", description="Render figures from engine artifacts")
    parser.add_argument("--data", required=True,
                        help="directory of CSV/JSON artifacts")
    parser.add_argument("--out", required=True, help="output image directory")
    parser.add_argument("--format", default="png", choices=["png", "svg"])
    args = parser.parse_args(argv)

    data = Path(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = args.format
    rendered = []

    runlogs = sorted(data.glob("runlog*.csv"))
    plain = [p for p in runlogs if "zsc" not in p.name]
    zsc = [p for p in runlogs if "zsc" in p.name]
    if plain:
        render_learning_curves(plain, out / f"learning_curves.{ext}")
        rendered.append("learning_curves")
    if zsc:
        render_zsc_bars(zsc, out / f"zsc_bars.{ext}")
        rendered.append("zsc_bars")
    for path in sorted(data.glob("crossplay*.json")):
        render_crossplay(path, out / f"{path.stem}.{ext}")
        rendered.append(path.stem)
    for path in sorted(data.glob("bench*.csv")):
        render_sps_scaling(path, out / f"{path.stem}_scaling.{ext}")
        rendered.append(f"{path.stem}_scaling")
    for path in sorted(data.glob("population*.json")):
        render_population_treemap(path, out / f"{path.stem}_treemap.{ext}")
        rendered.append(f"{path.stem}_treemap")

    if not rendered:
        print("no recognized artifacts found", file=sys.stderr)
        return 1
    print(f"rendered: {', '.join(rendered)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
