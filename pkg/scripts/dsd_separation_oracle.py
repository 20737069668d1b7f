#!/usr/bin/env python3
"""Monte Carlo calibration of the annihilation-distance thresholds.

Runs paired trials of same-source and different-source IID binary streams
and prints the observed distance ranges. The frozen thresholds asserted by
the acceptance suite come from this run; re-run after any change to the
deviation functional or the inversion procedure.
"""

import numpy as np

from wattprobe.smash import SmashConfig, dsd_distance
from wattprobe.symbolize import SymbolStream


def bernoulli_stream(rng, p_one, n):
    return SymbolStream(alphabet_size=2, symbols=(rng.random(n) < p_one).astype(np.int8))


def main(trials=100, n=100_000):
    cfg = SmashConfig()
    same, diff = [], []
    insufficient = 0
    for t in range(trials):
        rng = np.random.default_rng(t)
        a = bernoulli_stream(rng, 0.5, n)
        b = bernoulli_stream(rng, 0.5, n)
        c = bernoulli_stream(rng, 0.9, n)
        out_same = dsd_distance(a, b, cfg)
        out_diff = dsd_distance(a, c, cfg)
        if out_same.insufficient or out_diff.insufficient:
            insufficient += 1
            continue
        same.append(out_same.distance)
        diff.append(out_diff.distance)
    same, diff = np.array(same), np.array(diff)
    print(f"trials={trials} stream_length={n} insufficient={insufficient}")
    print(f"same-source   min={same.min():.5f} mean={same.mean():.5f} max={same.max():.5f}")
    print(f"diff-source   min={diff.min():.5f} mean={diff.mean():.5f} max={diff.max():.5f}")
    print(f"separation: min(diff)/max(same) = {diff.min() / same.max():.1f}x")


if __name__ == "__main__":
    main()
