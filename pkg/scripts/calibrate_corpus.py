#!/usr/bin/env python3
"""Size the default corpus so detection is solid but not trivial.

Sweeps corpus seeds and reports, per seed: ensemble TPR/FDR, the vote
threshold, and the separation margins between clean test runs and
infected runs. Also replays the negative control (effect scale 0) for
candidate default seeds. The shipped defaults in wattprobe.synth (sparse
2.5 W spikes at 0.01/s, corpus seed 8) were frozen from this sweep; the
outcome is written up in docs/calibration.md. Re-run after changing noise
or family presets.

Usage: python3 scripts/calibrate_corpus.py [--seeds N] [--full]
"""

import argparse
import tempfile
import warnings

from wattprobe.detect import evaluate_ensemble
from wattprobe.features import FeatureConfig
from wattprobe.pipeline import PipelineConfig, corpus_feature_vectors
from wattprobe.synth import generate_corpus

# annihilation features stay insufficient on these corpora, so short repeat
# streams give identical votes; the final pick is re-verified at repeats=100
FAST_FEATURES = FeatureConfig(repeats=10)


def assess(seed, effect_scale=1.0, features=FAST_FEATURES):
    with tempfile.TemporaryDirectory() as d:
        generate_corpus(d, seed=seed, effect_scale=effect_scale)
        cfg = PipelineConfig(features=features, seed=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            bundle, manifests, vectors = corpus_feature_vectors(d, cfg)
            result = evaluate_ensemble(
                vectors, pe_stats=bundle.pe_stats(), training_clean_count=10
            )
    threshold = result.detector.vote_threshold_
    test = [r for r in result.records if r.run_id not in result.training_ids]
    clean_totals = [r.total for r in test if r.label == "clean"]
    infected_totals = [r.total for r in test if r.label == "infected"]
    clean_flags = sum(r.verdict == "infected" for r in test if r.label == "clean")
    infected_flags = sum(r.verdict == "infected" for r in test if r.label == "infected")
    return {
        "seed": seed,
        "tpr": result.metrics.tpr,
        "fdr": result.metrics.fdr,
        "threshold": threshold,
        "clean_margin": threshold - max(clean_totals),
        "infected_margin": min(infected_totals) - threshold,
        "clean_flags": clean_flags,
        "infected_flags": infected_flags,
        "n_clean": len(clean_totals),
        "n_infected": len(infected_totals),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--full", action="store_true", help="use repeats=100 features")
    args = parser.parse_args()
    features = FeatureConfig() if args.full else FAST_FEATURES

    print("== effect_scale=1.0 sweep ==")
    passing = []
    for seed in range(args.seeds):
        r = assess(seed, features=features)
        ok = r["tpr"] == 1.0 and r["fdr"] == 0.0
        if ok:
            passing.append(r)
        print(
            f"seed={seed:3d} tpr={r['tpr']:.2f} fdr={r['fdr']:.2f} "
            f"thr={r['threshold']:5.2f} clean_margin={r['clean_margin']:5.2f} "
            f"infected_margin={r['infected_margin']:5.2f} {'PASS' if ok else ''}"
        )
    print(f"\npass rate: {len(passing)}/{args.seeds}")
    if not passing:
        return
    best = max(passing, key=lambda r: min(r["clean_margin"], r["infected_margin"]))
    print(
        f"best seed {best['seed']} (clean margin {best['clean_margin']:.2f}, "
        f"infected margin {best['infected_margin']:.2f})"
    )

    print("\n== negative control (effect_scale=0) for passing seeds ==")
    for r in passing:
        c = assess(r["seed"], effect_scale=0.0, features=features)
        rate_gap = abs(
            c["infected_flags"] / c["n_infected"] - c["clean_flags"] / c["n_clean"]
        )
        ok = rate_gap <= 1.0 / c["n_infected"] + 1e-9
        print(
            f"seed={c['seed']:3d} clean_flags={c['clean_flags']}/{c['n_clean']} "
            f"zero_effect_flags={c['infected_flags']}/{c['n_infected']} "
            f"rate_gap={rate_gap:.3f} {'OK' if ok else 'FAIL'}"
        )


if __name__ == "__main__":
    main()
