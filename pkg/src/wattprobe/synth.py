"""Seeded synthetic power-trace corpora.

Runs mirror the real acquisition protocol: a full-load stress plateau, a
task, another plateau, and so on, ending with a final plateau. Background
noise combines per-sample jitter with sporadic service spikes; infected
variants superpose per-family effects (level shift, extra spikes, periodic
load) over the task regions only, scaled by a common effect multiplier so
an effect scale of zero is a true negative control.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from wattprobe.trace import PowerTrace, RunManifest, save_manifest

RAW_CADENCE_SECONDS = 0.017
RAW_CADENCE_JITTER = 0.001


@dataclass(frozen=True)
class TaskSpec:
    name: str
    duration: float
    base_level: float
    pattern: str = "flat"  # flat | bursts | ramp
    burst_count: int = 15
    burst_spacing: float = 5.0
    burst_height: float = 12.0
    burst_width: float = 2.5
    ramp_height: float = 8.0

    def __post_init__(self):
        if self.duration <= 0 or self.base_level <= 0:
            raise ValueError("duration and base_level must be positive")
        if self.pattern not in ("flat", "bursts", "ramp"):
            raise ValueError(f"unknown pattern {self.pattern!r}")

    def level_at(self, local_t):
        """Noise-free task level at each local time (vectorized)."""
        level = np.full_like(local_t, self.base_level, dtype=float)
        if self.pattern == "bursts":
            phase = local_t % self.burst_spacing
            index = np.floor(local_t / self.burst_spacing)
            active = (index < self.burst_count) & (phase < self.burst_width)
            level[active] += self.burst_height
        elif self.pattern == "ramp":
            level += self.ramp_height * (local_t / self.duration)
        return level


@dataclass(frozen=True)
class NoiseSpec:
    gaussian_sd: float = 0.4
    spike_rate: float = 0.01  # events per second
    spike_duration_mean: float = 0.3
    spike_height: float = 2.5

    def __post_init__(self):
        for name in ("gaussian_sd", "spike_rate", "spike_duration_mean", "spike_height"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class InfectionSpec:
    family: str
    mean_shift: float = 0.0
    extra_spike_rate: float = 0.0
    periodic_amplitude: float = 0.0
    periodic_period: float = 0.0
    effect_scale: float = 1.0

    def __post_init__(self):
        if not (self.mean_shift or self.extra_spike_rate or self.periodic_amplitude):
            raise ValueError("an infection needs at least one nonzero base effect")
        if self.periodic_amplitude and self.periodic_period <= 0:
            raise ValueError("periodic load needs a positive period")


DEFAULT_TASKS = (
    TaskSpec(name="idle", duration=180.0, base_level=20.0, pattern="flat"),
    TaskSpec(name="browser", duration=85.0, base_level=22.0, pattern="bursts"),
    TaskSpec(name="registry", duration=60.0, base_level=26.0, pattern="ramp"),
)

DEFAULT_NOISE = NoiseSpec()

# family effect sizes were settled with scripts/calibrate_corpus.py: large
# enough that every infected run outvotes the training threshold, small
# enough that single features still miss runs. A pure level shift caps out
# at 6 votes (variance/skewness/kurtosis are shift-invariant), so every
# family carries some activity beyond a shift.
FAMILY_PRESETS = (
    InfectionSpec(family="drainer", mean_shift=2.5, extra_spike_rate=0.08),
    InfectionSpec(family="spikestorm", extra_spike_rate=0.3),
    InfectionSpec(family="metronome", periodic_amplitude=2.5, periodic_period=4.0),
    InfectionSpec(family="chatter", periodic_amplitude=1.8, periodic_period=0.5),
    InfectionSpec(family="creeper", mean_shift=1.0, extra_spike_rate=0.15),
)

MARKER_LEVEL = 60.0
MARKER_DURATION = 5.0


def _spike_deltas(rng, times, rate, height, duration_mean, span):
    """Additive contribution of a Poisson spike process over [span0, span1)."""
    deltas = np.zeros_like(times)
    start, end = span
    count = rng.poisson(rate * (end - start))
    for _ in range(count):
        s = rng.uniform(start, end)
        d = rng.exponential(duration_mean)
        i0, i1 = np.searchsorted(times, [s, s + d])
        deltas[i0:i1] += height
    return deltas


def generate_run(
    tasks=DEFAULT_TASKS,
    noise=DEFAULT_NOISE,
    infection: InfectionSpec | None = None,
    seed=0,
    run_id: str = "run",
    marker_level: float = MARKER_LEVEL,
    marker_duration: float = MARKER_DURATION,
    lead_seconds: float = 3.0,
):
    """Build one run's raw power trace and its manifest.

    Layout: a short settle region, then marker, task 1, marker, ...,
    task N, marker, and a short tail. Identical seeds give bit-identical
    traces.
    """
    if not tasks:
        raise ValueError("need at least one task")
    rng = np.random.default_rng(seed)

    marker_spans = []
    task_spans = []
    t = lead_seconds
    for spec in tasks:
        marker_spans.append((t, t + marker_duration))
        t += marker_duration
        task_spans.append((t, t + spec.duration))
        t += spec.duration
    marker_spans.append((t, t + marker_duration))
    total = t + marker_duration + lead_seconds

    deltas = rng.normal(RAW_CADENCE_SECONDS, RAW_CADENCE_JITTER, int(total / RAW_CADENCE_SECONDS) + 60)
    times = np.cumsum(np.maximum(deltas, 0.004))
    times = times[times < total]

    # settle/tail regions idle at the first task's base level
    levels = np.full_like(times, tasks[0].base_level)
    for spec, (t0, t1) in zip(tasks, task_spans):
        mask = (times >= t0) & (times < t1)
        levels[mask] = spec.level_at(times[mask] - t0)

    levels += _spike_deltas(
        rng, times, noise.spike_rate, noise.spike_height, noise.spike_duration_mean, (0.0, total)
    )

    if infection is not None and infection.effect_scale != 0.0:
        scale = infection.effect_scale
        for t0, t1 in task_spans:
            mask = (times >= t0) & (times < t1)
            levels[mask] += scale * infection.mean_shift
            if infection.periodic_amplitude:
                wave = np.sin(2 * np.pi * times[mask] / infection.periodic_period)
                levels[mask] += scale * infection.periodic_amplitude * 0.5 * (1.0 + wave)
            if infection.extra_spike_rate:
                levels += _spike_deltas(
                    rng,
                    times,
                    scale * infection.extra_spike_rate,
                    noise.spike_height,
                    noise.spike_duration_mean,
                    (t0, t1),
                )

    # markers saturate the CPU, overriding whatever else is going on
    for t0, t1 in marker_spans:
        mask = (times >= t0) & (times < t1)
        levels[mask] = marker_level

    levels += rng.normal(0.0, noise.gaussian_sd, times.size)
    levels = np.maximum(levels, 0.0)

    trace = PowerTrace(rail="+12V CPU", times=times, powers=levels)
    manifest = RunManifest(
        run_id=run_id,
        label="clean" if infection is None else "infected",
        family=None if infection is None else infection.family,
        task_order=tuple(spec.name for spec in tasks),
        trace_file=f"{run_id}.csv",
        ground_truth={
            "markers": [[round(a, 6), round(b, 6)] for a, b in marker_spans],
            "tasks": [[round(a, 6), round(b, 6)] for a, b in task_spans],
            "effect_scale": 0.0 if infection is None else infection.effect_scale,
        },
    )
    return trace, manifest


def write_trace_csv(trace: PowerTrace, path, channels: str = "vi", rng=None):
    """Write a trace as CSV, either as V/I channel pairs or a power column."""
    lines = []
    if channels == "vi":
        rng = rng or np.random.default_rng(0)
        volts = 12.0 + rng.normal(0.0, 0.02, trace.times.size)
        amps = trace.powers / volts
        lines.append(f"time_s,v_{trace.rail},i_{trace.rail}")
        for t, v, i in zip(trace.times, volts, amps):
            lines.append(f"{t:.6f},{v:.6f},{i:.8f}")
    elif channels == "power":
        lines.append("time_s,power_w")
        for t, p in zip(trace.times, trace.powers):
            lines.append(f"{t:.6f},{p:.6f}")
    else:
        raise ValueError("channels must be 'vi' or 'power'")
    Path(path).write_text("\n".join(lines) + "\n")


def generate_corpus(
    out_dir,
    families: int = 5,
    runs_per_family: int = 3,
    clean_runs: int = 15,
    seed: int = 8,
    effect_scale: float = 1.0,
    channels: str = "vi",
    tasks=DEFAULT_TASKS,
    noise=DEFAULT_NOISE,
    presets=FAMILY_PRESETS,
):
    """Write a labeled corpus of trace CSVs plus manifests and an index.

    Every run's randomness derives from (seed, run index), so regenerating
    with the same seed reproduces the directory byte for byte.
    """
    if families < 1 or runs_per_family < 1 or clean_runs < 1:
        raise ValueError("counts must be at least 1")
    if families > len(presets):
        raise ValueError(f"only {len(presets)} infection presets available")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifests = []
    run_index = 0

    def emit(run_id, infection):
        nonlocal run_index
        run_seed = np.random.SeedSequence([seed, run_index])
        trace, manifest = generate_run(
            tasks=tasks, noise=noise, infection=infection,
            seed=run_seed, run_id=run_id,
        )
        csv_rng = np.random.default_rng(np.random.SeedSequence([seed, run_index, 1]))
        write_trace_csv(trace, out / manifest.trace_file, channels=channels, rng=csv_rng)
        save_manifest(manifest, out / f"{run_id}.json")
        manifests.append(manifest)
        run_index += 1

    for i in range(clean_runs):
        emit(f"clean_{i:02d}", None)
    for f in range(families):
        preset = presets[f]
        preset = replace(preset, effect_scale=preset.effect_scale * effect_scale)
        for r in range(runs_per_family):
            emit(f"{preset.family}_{r}", preset)

    index = {
        "seed": seed,
        "effect_scale": effect_scale,
        "task_order": [spec.name for spec in tasks],
        "runs": [m.to_dict() for m in manifests],
    }
    (out / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True))
    return manifests


def load_corpus_index(corpus_dir):
    """Read index.json back into manifests (order preserved)."""
    raw = json.loads((Path(corpus_dir) / "index.json").read_text())
    return [
        RunManifest(
            run_id=m["run_id"],
            label=m["label"],
            family=m.get("family"),
            task_order=tuple(m["task_order"]),
            trace_file=m["trace_file"],
            ground_truth=m.get("ground_truth", {}),
        )
        for m in raw["runs"]
    ]
