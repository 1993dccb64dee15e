"""K and beta sensitivity curves on planted regimes, written as CSV and SVG.

Thin wrapper over ``timeliner sweep --planted``. Flags given on the command
line come after the defaults, so they win.

    python scripts/sweep_curves.py --out out/sweep
"""

import sys

from timeliner.cli import run_command

DEFAULTS = ["--planted", "--k", "1..7", "--beta", "0,1,2,5,10,20,50", "--seed", "0"]

if __name__ == "__main__":
    sys.exit(run_command(["sweep", *DEFAULTS, *sys.argv[1:]]))
