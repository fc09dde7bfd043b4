"""Write medial-axis masks and retraction traces for every planar fixture.

    python3 scripts/render_fixtures.py [out_dir]

Produces <out_dir>/<fixture>/{mask.csv,mask.svg,traces.csv,traces.svg,...} through the CLI.
"""
import sys
from pathlib import Path

from hjsing.cli import main as hjsing

PLANAR = ["two-points", "circle", "square"]


def main():
    root = Path(sys.argv[1] if len(sys.argv) > 1 else "renders")
    worst = 0
    for name in PLANAR:
        out = root / name
        for command in ("medial-axis", "retract"):
            code = hjsing([command, "--fixture", name, "--out", str(out)])
            print(f"{name:16s} {command:12s} exit {code}")
            worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
