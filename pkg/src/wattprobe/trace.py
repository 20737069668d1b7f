"""Power-trace ingestion and segmentation.

Raw recordings carry per-rail voltage and current channels; multiplying the
pair gives instantaneous power. A recording is resampled onto a uniform
grid, full-CPU-load stress markers are detected as high-power plateaus, and
the regions between consecutive markers become labeled task segments.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from wattprobe.validation import as_float_vector

DEFAULT_RAIL = "+12V CPU"
DEFAULT_DT = 0.01


@dataclass(frozen=True)
class RawRecording:
    """Timestamped multi-channel readings straight off the acquisition path.

    Channel names follow ``v_<rail>`` / ``i_<rail>``; every voltage channel
    must have a matching current channel.
    """

    times: np.ndarray
    channels: dict

    def __post_init__(self):
        times = as_float_vector(self.times, "times")
        if times.size == 0:
            raise ValueError("recording has no samples")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        channels = {}
        for name, readings in self.channels.items():
            arr = as_float_vector(readings, f"channel {name!r}")
            if arr.shape != times.shape:
                raise ValueError(
                    f"channel {name!r} has {arr.size} readings for {times.size} timestamps"
                )
            channels[str(name)] = arr
        for name in channels:
            if name.startswith("v_") and f"i_{name[2:]}" not in channels:
                raise ValueError(f"voltage channel {name!r} has no matching current channel")
        object.__setattr__(self, "channels", channels)

    @property
    def rails(self):
        return sorted(n[2:] for n in self.channels if n.startswith("v_"))


@dataclass(frozen=True)
class PowerTrace:
    """Instantaneous power samples on one supply rail."""

    rail: str
    times: np.ndarray
    powers: np.ndarray

    def __post_init__(self):
        times = as_float_vector(self.times, "times")
        powers = as_float_vector(self.powers, "powers")
        if times.size == 0:
            raise ValueError("power trace is empty")
        if times.shape != powers.shape:
            raise ValueError("times and powers differ in length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(powers < 0):
            raise ValueError("power readings must be non-negative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "powers", powers)

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class UniformProfile:
    """Power readings at times 0, dt, 2*dt, ..."""

    dt: float
    values: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        values = as_float_vector(self.values, "values")
        if values.size < 2:
            raise ValueError("uniform profile needs at least two samples")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    @property
    def duration(self):
        return (self.values.size - 1) * self.dt


@dataclass(frozen=True)
class TaskSegment:
    """One task's sub-profile, re-zeroed to t=0."""

    task: str
    profile: UniformProfile
    run_id: str = ""
    label: str = "clean"
    family: str | None = None

    def __post_init__(self):
        if self.label not in ("clean", "infected"):
            raise ValueError(f"label must be 'clean' or 'infected', got {self.label!r}")


@dataclass(frozen=True)
class MarkerConfig:
    """How to recognize full-load stress plateaus.

    The reference level is either the profile maximum or a high quantile of
    it (quantile is more robust to single-sample spikes); a marker is a
    maximal stretch of samples at or above ``level_fraction`` times the
    reference that lasts at least ``min_duration`` seconds.
    """

    level_fraction: float = 0.85
    min_duration: float = 2.0
    reference: str = "quantile"
    quantile: float = 0.99

    def __post_init__(self):
        if not 0 < self.level_fraction <= 1:
            raise ValueError("level_fraction must be in (0, 1]")
        if not self.min_duration > 0:
            raise ValueError("min_duration must be positive")
        if self.reference not in ("quantile", "max"):
            raise ValueError("reference must be 'quantile' or 'max'")
        if not 0 < self.quantile <= 1:
            raise ValueError("quantile must be in (0, 1]")


class MarkerCountError(ValueError):
    """Marker count does not match the manifest's task order."""

    def __init__(self, expected, found):
        self.expected = expected
        self.found = found
        super().__init__(f"expected {expected} markers, found {found}")


def compute_power(rec: RawRecording, rail: str = DEFAULT_RAIL) -> PowerTrace:
    """Multiply a rail's voltage and current channels into a power trace."""
    v_name, i_name = f"v_{rail}", f"i_{rail}"
    if v_name not in rec.channels or i_name not in rec.channels:
        raise ValueError(f"unknown rail {rail!r}; available rails: {rec.rails}")
    powers = rec.channels[v_name] * rec.channels[i_name]
    return PowerTrace(rail=rail, times=rec.times, powers=powers)


def resample_uniform(trace: PowerTrace, dt: float = DEFAULT_DT) -> UniformProfile:
    """Shift a trace to start at t=0 and linearly interpolate onto a dt grid.

    The grid covers [0, T] where T is the last multiple of dt not past the
    final (shifted) sample; no extrapolation.
    """
    if len(trace) < 2:
        raise ValueError("resampling needs at least two samples")
    t = trace.times - trace.times[0]
    n = int(math.floor(t[-1] / dt + 1e-9)) + 1
    if n < 2:
        raise ValueError(f"trace spans {t[-1]:.4g}s, shorter than one dt={dt:g} step")
    grid = np.arange(n) * dt
    return UniformProfile(dt=dt, values=np.interp(grid, t, trace.powers))


def detect_markers(profile: UniformProfile, cfg: MarkerConfig = MarkerConfig()):
    """Locate stress plateaus; returns disjoint (start, end) intervals in seconds.

    A constant profile degenerates to one interval spanning everything;
    callers reject recordings whose marker count differs from expected.
    """
    values = profile.values
    if cfg.reference == "max":
        ref = float(values.max())
    else:
        ref = float(np.quantile(values, cfg.quantile))
    threshold = cfg.level_fraction * ref
    above = values >= threshold
    padded = np.concatenate(([False], above, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts, ends = edges[0::2], edges[1::2] - 1  # inclusive sample indices
    markers = []
    for i0, i1 in zip(starts, ends):
        if (i1 - i0) * profile.dt >= cfg.min_duration - 1e-9:
            markers.append((i0 * profile.dt, i1 * profile.dt))
    return markers


def segment_tasks(
    profile: UniformProfile,
    markers,
    task_order,
    run_id: str = "",
    label: str = "clean",
    family: str | None = None,
    guard_seconds: float = 0.25,
):
    """Cut the inter-marker gaps into labeled task segments.

    A run starts and ends with a marker, so N tasks need N+1 markers; the
    region before the first marker is discarded. A guard band is trimmed
    from each side of every gap to exclude marker ramp edges.
    """
    expected = len(task_order) + 1
    if len(markers) != expected:
        raise MarkerCountError(expected=expected, found=len(markers))
    if any(markers[k][1] > markers[k + 1][0] for k in range(len(markers) - 1)):
        raise ValueError("markers must be sorted and disjoint")
    dt = profile.dt
    segments = []
    for k, task in enumerate(task_order):
        t0 = markers[k][1] + guard_seconds
        t1 = markers[k + 1][0] - guard_seconds
        i0 = int(math.ceil(t0 / dt - 1e-9))
        i1 = int(math.floor(t1 / dt + 1e-9))
        if i1 - i0 + 1 < 2:
            raise ValueError(
                f"task {task!r} segment between markers {k} and {k + 1} is too short "
                f"after the {guard_seconds}s guard trim"
            )
        sub = UniformProfile(dt=dt, values=profile.values[i0 : i1 + 1].copy())
        segments.append(
            TaskSegment(task=task, profile=sub, run_id=run_id, label=label, family=family)
        )
    return segments


@dataclass(frozen=True)
class RunManifest:
    """Describes one recorded run: label, task order, and trace location."""

    run_id: str
    label: str
    family: str | None
    task_order: tuple
    trace_file: str
    ground_truth: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.label not in ("clean", "infected"):
            raise ValueError(f"label must be 'clean' or 'infected', got {self.label!r}")
        if self.label == "clean" and self.family is not None:
            raise ValueError("clean runs cannot carry a family name")
        if not self.task_order:
            raise ValueError("task_order is empty")
        object.__setattr__(self, "task_order", tuple(self.task_order))

    def to_dict(self):
        out = {
            "run_id": self.run_id,
            "label": self.label,
            "family": self.family,
            "task_order": list(self.task_order),
            "trace_file": self.trace_file,
        }
        if self.ground_truth:
            out["ground_truth"] = self.ground_truth
        return out


def load_manifest(path) -> RunManifest:
    raw = json.loads(Path(path).read_text())
    return RunManifest(
        run_id=raw["run_id"],
        label=raw["label"],
        family=raw.get("family"),
        task_order=tuple(raw["task_order"]),
        trace_file=raw["trace_file"],
        ground_truth=raw.get("ground_truth", {}),
    )


def save_manifest(manifest: RunManifest, path):
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))


def read_trace_csv(path):
    """Read a trace CSV into (times, {column: readings}).

    Header is ``time_s`` followed by channel columns: either a single
    ``power_w`` column or ``v_<rail>`` / ``i_<rail>`` pairs.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "time_s":
            raise ValueError(f"{path}: first column must be 'time_s'")
        rows = [[float(cell) for cell in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no samples")
    data = np.asarray(rows, dtype=float)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    times = data[:, 0]
    columns = {name: data[:, j + 1] for j, name in enumerate(header[1:])}
    return times, columns


def load_power_trace(path, rail: str = DEFAULT_RAIL) -> PowerTrace:
    """Load a trace CSV as a PowerTrace, multiplying V/I channels if needed."""
    times, columns = read_trace_csv(path)
    if "power_w" in columns:
        return PowerTrace(rail=rail, times=times, powers=columns["power_w"])
    rec = RawRecording(times=times, channels=columns)
    return compute_power(rec, rail)
