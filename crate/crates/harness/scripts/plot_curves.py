#!/usr/bin/env python3
"""Plot learning curves written by `sindy-rl run` or `sindy-rl compare`.

    plot_curves.py results/pendulum/curves.csv -o pendulum.png
    plot_curves.py comparison/comparison_curves.csv --log-x --threshold -200

Curves are eval return against real environment steps (seed rollout
included), one line per run: mean over seeds, shaded by one standard
deviation.
"""

import argparse
import csv
from collections import defaultdict

import matplotlib.pyplot as plt
import numpy as np


def load(path):
    runs = defaultdict(lambda: defaultdict(list))
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            run = row.get("run", "run")
            runs[run][row["seed"]].append((float(row["real_steps"]), float(row["eval_mean"])))
    return runs


def mean_curve(seeds):
    grid = np.unique(np.concatenate([[s for s, _ in pts] for pts in seeds.values()]))
    values = []
    for pts in seeds.values():
        steps, returns = zip(*sorted(pts))
        # Hold the last evaluation after a seed's run ended.
        idx = np.searchsorted(steps, grid, side="right") - 1
        v = np.where(idx >= 0, np.asarray(returns)[np.clip(idx, 0, None)], np.nan)
        values.append(v)
    values = np.array(values)
    return grid, np.nanmean(values, axis=0), np.nanstd(values, axis=0)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv")
    parser.add_argument("-o", "--output", help="image file; shows a window when omitted")
    parser.add_argument("--title")
    parser.add_argument("--threshold", type=float, help="draw the solved threshold")
    parser.add_argument("--log-x", action="store_true")
    args = parser.parse_args()

    fig, ax = plt.subplots(figsize=(7, 4))
    for name, seeds in sorted(load(args.csv).items()):
        x, mean, std = mean_curve(seeds)
        ax.step(x, mean, where="post", label=f"{name} ({len(seeds)} seeds)")
        ax.fill_between(x, mean - std, mean + std, step="post", alpha=0.2)
    if args.threshold is not None:
        ax.axhline(args.threshold, color="grey", linestyle="--", linewidth=1)
    if args.log_x:
        ax.set_xscale("log")
    ax.set_xlabel("real environment steps")
    ax.set_ylabel("evaluation return")
    if args.title:
        ax.set_title(args.title)
    ax.legend()
    fig.tight_layout()
    if args.output:
        fig.savefig(args.output, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
