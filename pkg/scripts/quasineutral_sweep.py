#!/usr/bin/env python3
"""Run an epsilon sweep and summarize how fast the kinetic run approaches
its incompressible reference.

Thin wrapper over ``quasikin sweep``: runs the scenario, then reads
convergence.csv / slopes.json back and prints a table plus the fitted
rates.  Pass --plot to also write a log-log PNG next to the outputs
(needs matplotlib, which is optional).

Example:
    python3 scripts/quasineutral_sweep.py --output out/sweep_d1
    python3 scripts/quasineutral_sweep.py --config scenarios/quasineutral_d2.cfg
"""

import argparse
import csv
import json
import sys
from pathlib import Path

from quasikin.cli import main as cli_main

REPO = Path(__file__).resolve().parents[1]


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument(
        "--config",
        default=str(REPO / "scenarios" / "sweep_quasineutral_d1.cfg"),
        help="sweep scenario file (default: the 1-d quasineutral sweep)",
    )
    p.add_argument("--output", default="out/quasineutral_sweep")
    p.add_argument("--plot", action="store_true", help="write sweep.png (matplotlib)")
    return p.parse_args()


def main() -> int:
    args = parse_args()
    out = Path(args.output)
    code = cli_main(["sweep", "--config", args.config, "--output", str(out)])
    if code != 0:
        print(f"sweep exited with code {code}", file=sys.stderr)
        return code

    with open(out / "convergence.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    slopes = json.loads((out / "slopes.json").read_text())

    cols = [c for c in rows[0] if c != "status"]
    widths = [max(len(c), 12) for c in cols]
    print("  ".join(c.rjust(w) for c, w in zip(cols, widths)))
    for row in rows:
        print(
            "  ".join(
                (f"{float(row[c]):.6e}" if row[c] else "-").rjust(w)
                for c, w in zip(cols, widths)
            )
        )
    print()
    for key, value in slopes.items():
        print(f"{key}: {value}")

    if args.plot:
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            print("matplotlib not installed; skipping plot", file=sys.stderr)
            return 0
        eps = [float(r["epsilon"]) for r in rows if r["status"] == "ok"]
        fig, ax = plt.subplots(figsize=(5, 4))
        for col in cols[1:]:
            vals = [float(r[col]) for r in rows if r["status"] == "ok" and r[col]]
            if len(vals) == len(eps) and min(vals) > 0:
                ax.loglog(eps, vals, "o-", label=col)
        ax.set_xlabel("epsilon")
        ax.legend(fontsize=8)
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        fig.savefig(out / "sweep.png", dpi=150)
        print(f"wrote {out / 'sweep.png'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
