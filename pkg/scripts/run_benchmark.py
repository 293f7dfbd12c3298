"""Run the desk-scale closed-loop benchmark across variants and seeds.

Reproduces the method comparison used by the acceptance suite: full method
vs random sampling (SSL+RS) plus the single-component ablations, on the
imbalanced 3-class gaussian preset, and prints a mean/std table and the
full-vs-random accuracy gap.

Usage: python scripts/run_benchmark.py [--seeds 10] [--variants full SSL+RS ...]
"""

import argparse
import sys
import time

import numpy as np

from labelloop.benchmark import VARIANTS, run_benchmark_variant


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--variants", nargs="*", default=list(VARIANTS))
    args = parser.parse_args()

    results = {}
    t0 = time.perf_counter()
    for variant in args.variants:
        accs, mf1s, correct = [], [], []
        for seed in range(args.seeds):
            rep = run_benchmark_variant(seed, variant)
            m = rep["final"]["metrics"]["test"]
            accs.append(m["ACC"])
            mf1s.append(m["MF1"])
            correct.append(rep["cycles"][-1]["pseudo"]["correct"])
        results[variant] = (np.array(accs), np.array(mf1s), np.array(correct))
        print(f"done {variant} ({time.perf_counter() - t0:.0f}s)", file=sys.stderr)

    header = f"{'variant':>8} | {'ACC':>16} | {'MF1':>16} | {'correct pseudo':>14}"
    print(header)
    print("-" * len(header))
    for variant in args.variants:
        accs, mf1s, correct = results[variant]
        print(f"{variant:>8} | {accs.mean():7.4f} ± {accs.std():.4f} | "
              f"{mf1s.mean():7.4f} ± {mf1s.std():.4f} | {correct.mean():10.1f}")

    if "full" in results and "SSL+RS" in results:
        gap = (results["full"][0].mean() - results["SSL+RS"][0].mean()) * 100
        print(f"\nfull vs SSL+RS accuracy gap: {gap:+.2f} points")
    return 0


if __name__ == "__main__":
    sys.exit(main())
