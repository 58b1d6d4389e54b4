#!/usr/bin/env python3
"""Plot test-error curves and error ratios from an `abcboost sweep` directory.

usage: plot_sweep.py SWEEP_DIR [--out FIG.png]
"""
import argparse
import csv
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

CELL = re.compile(r"(?P<algo>[a-z-]+)_J(?P<J>\d+)_nu(?P<nu>[0-9.e-]+)(?:_G(?P<G>\d+))?_M\d+\.csv")


def read_curve(path):
    with open(path) as f:
        rows = [r for r in csv.DictReader(f) if r["test_error"]]
    return [int(r["iteration"]) for r in rows], [int(r["test_error"]) for r in rows]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("sweep_dir", type=Path)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    fig, axes = plt.subplots(1, 3, figsize=(15, 4.5))
    panels = {"mart": axes[0], "abc-mart": axes[0], "logitboost": axes[1], "abc-logitboost": axes[1]}
    for path in sorted((args.sweep_dir / "metrics").glob("*.csv")):
        m = CELL.fullmatch(path.name)
        if not m:
            continue
        x, y = read_curve(path)
        label = m["algo"] + (f" G={m['G']}" if m["G"] else "") + f" J={m['J']} nu={m['nu']}"
        style = "-" if m["G"] else "k--"
        panels[m["algo"]].plot(x, y, style, label=label, linewidth=1)
    for ax, title in zip(axes[:2], ["mart / abc-mart", "logitboost / abc-logitboost"]):
        ax.set_title(title)
        ax.set_xlabel("iteration")
        ax.set_ylabel("test errors")
        ax.legend(fontsize=6)

    ratios = args.sweep_dir / "ratios.csv"
    if ratios.exists():
        with open(ratios) as f:
            rows = [r for r in csv.DictReader(f) if r["ratio"] not in ("", "inf")]
        for pair in sorted({r["pair"] for r in rows}):
            pts = sorted((int(r["G"]), float(r["ratio"])) for r in rows if r["pair"] == pair)
            axes[2].plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=pair)
        axes[2].set_xscale("log")
        axes[2].set_xlabel("G")
        axes[2].set_ylabel("error ratio (plain / abc)")
        axes[2].legend(fontsize=7)

    fig.tight_layout()
    out = args.out or args.sweep_dir / "sweep.png"
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
