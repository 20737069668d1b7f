import numpy as np
import pytest

from wattprobe.synth import (
    DEFAULT_NOISE,
    DEFAULT_TASKS,
    FAMILY_PRESETS,
    InfectionSpec,
    NoiseSpec,
    TaskSpec,
    generate_corpus,
    generate_run,
    load_corpus_index,
    write_trace_csv,
)
from wattprobe.trace import (
    MarkerConfig,
    detect_markers,
    load_power_trace,
    resample_uniform,
    segment_tasks,
)

QUIET = NoiseSpec(gaussian_sd=0.0, spike_rate=0.0, spike_height=0.0)
SHORT_TASKS = (
    TaskSpec(name="idle", duration=20.0, base_level=20.0),
    TaskSpec(name="browser", duration=20.0, base_level=22.0, pattern="bursts", burst_count=3),
)


class TestGenerateRun:
    def test_noiseless_idle_run_is_flat_between_plateaus(self):
        trace, manifest = generate_run(
            tasks=(TaskSpec(name="idle", duration=20.0, base_level=20.0),),
            noise=QUIET,
            seed=0,
        )
        (t0, t1) = manifest.ground_truth["tasks"][0]
        mask = (trace.times >= t0 + 0.1) & (trace.times < t1 - 0.1)
        assert np.all(trace.powers[mask] == 20.0)
        m0, m1 = manifest.ground_truth["markers"][0]
        marker_mask = (trace.times >= m0 + 0.1) & (trace.times < m1 - 0.1)
        assert np.all(trace.powers[marker_mask] == 60.0)

    def test_same_seed_bit_identical(self):
        a, _ = generate_run(tasks=SHORT_TASKS, seed=42)
        b, _ = generate_run(tasks=SHORT_TASKS, seed=42)
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.powers, b.powers)

    def test_mean_shift_moves_task_means(self):
        infection = InfectionSpec(family="drainer", mean_shift=2.0)
        clean, m_clean = generate_run(tasks=SHORT_TASKS, seed=3)
        dirty, m_dirty = generate_run(tasks=SHORT_TASKS, infection=infection, seed=3)

        def task_mean(trace, manifest, k):
            t0, t1 = manifest.ground_truth["tasks"][k]
            mask = (trace.times >= t0 + 0.5) & (trace.times < t1 - 0.5)
            return trace.powers[mask].mean()

        n = int(20.0 / 0.017)
        tolerance = 3 * DEFAULT_NOISE.gaussian_sd / np.sqrt(n) + 0.6  # spikes add slack
        for k in range(2):
            shift = task_mean(dirty, m_dirty, k) - task_mean(clean, m_clean, k)
            assert shift == pytest.approx(2.0, abs=tolerance)

    def test_zero_effect_scale_matches_clean_run(self):
        control = InfectionSpec(family="drainer", mean_shift=2.0, effect_scale=0.0)
        clean, _ = generate_run(tasks=SHORT_TASKS, seed=9)
        dirty, manifest = generate_run(tasks=SHORT_TASKS, infection=control, seed=9)
        assert np.array_equal(clean.powers, dirty.powers)
        assert manifest.label == "infected"

    def test_raw_cadence(self):
        trace, _ = generate_run(tasks=SHORT_TASKS, seed=1)
        gaps = np.diff(trace.times)
        assert np.median(gaps) == pytest.approx(0.017, abs=0.001)

    def test_markers_recoverable(self):
        trace, manifest = generate_run(tasks=SHORT_TASKS, seed=5)
        profile = resample_uniform(trace)
        markers = detect_markers(profile, MarkerConfig())
        truth = manifest.ground_truth["markers"]
        assert len(markers) == len(truth)
        for (found_s, found_e), (true_s, true_e) in zip(markers, truth):
            assert found_s == pytest.approx(true_s, abs=0.05)
            assert found_e == pytest.approx(true_e, abs=0.05)

    def test_segmentation_matches_manifest(self):
        trace, manifest = generate_run(tasks=SHORT_TASKS, seed=6)
        profile = resample_uniform(trace)
        markers = detect_markers(profile)
        segments = segment_tasks(profile, markers, manifest.task_order)
        assert [s.task for s in segments] == list(manifest.task_order)
        for seg, spec in zip(segments, SHORT_TASKS):
            assert seg.profile.duration == pytest.approx(spec.duration - 0.5, abs=0.2)


class TestSpecs:
    def test_infection_needs_an_effect(self):
        with pytest.raises(ValueError, match="nonzero"):
            InfectionSpec(family="nothing")

    def test_periodic_needs_period(self):
        with pytest.raises(ValueError, match="period"):
            InfectionSpec(family="x", periodic_amplitude=1.0)

    def test_task_patterns_validated(self):
        with pytest.raises(ValueError, match="pattern"):
            TaskSpec(name="x", duration=10, base_level=10, pattern="wave")

    def test_burst_pattern_levels(self):
        spec = TaskSpec(
            name="browser", duration=20.0, base_level=10.0, pattern="bursts",
            burst_count=2, burst_spacing=5.0, burst_height=5.0, burst_width=2.0,
        )
        t = np.array([0.5, 3.0, 5.5, 9.0, 12.0])
        assert spec.level_at(t).tolist() == [15.0, 10.0, 15.0, 10.0, 10.0]

    def test_defaults_mirror_protocol(self):
        names = [t.name for t in DEFAULT_TASKS]
        assert names == ["idle", "browser", "registry"]
        assert DEFAULT_TASKS[0].duration == 180.0
        assert DEFAULT_TASKS[1].burst_count == 15
        assert DEFAULT_TASKS[1].burst_spacing == 5.0
        assert len(FAMILY_PRESETS) == 5


class TestCorpus:
    def test_default_counts(self, tmp_path):
        manifests = generate_corpus(
            tmp_path, seed=1, tasks=SHORT_TASKS, clean_runs=4,
            families=2, runs_per_family=1,
        )
        assert len(manifests) == 6
        labels = [m.label for m in manifests]
        assert labels.count("clean") == 4
        assert labels.count("infected") == 2

    def test_small_counts(self, tmp_path):
        manifests = generate_corpus(
            tmp_path, families=2, runs_per_family=1, clean_runs=2, seed=0, tasks=SHORT_TASKS
        )
        assert len(manifests) == 4

    def test_regeneration_identical(self, tmp_path):
        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        generate_corpus(dir_a, seed=3, tasks=SHORT_TASKS, clean_runs=2, families=2, runs_per_family=1)
        generate_corpus(dir_b, seed=3, tasks=SHORT_TASKS, clean_runs=2, families=2, runs_per_family=1)
        for path_a in sorted(dir_a.iterdir()):
            path_b = dir_b / path_a.name
            assert path_a.read_bytes() == path_b.read_bytes()

    def test_index_roundtrip(self, tmp_path):
        manifests = generate_corpus(
            tmp_path, seed=2, tasks=SHORT_TASKS, clean_runs=2, families=2, runs_per_family=1
        )
        loaded = load_corpus_index(tmp_path)
        assert [m.run_id for m in loaded] == [m.run_id for m in manifests]
        assert loaded[0].task_order == ("idle", "browser")

    def test_vi_channels_reconstruct_power(self, tmp_path):
        generate_corpus(
            tmp_path, seed=4, tasks=SHORT_TASKS, clean_runs=1, families=2, runs_per_family=1
        )
        manifest = load_corpus_index(tmp_path)[0]
        trace = load_power_trace(tmp_path / manifest.trace_file)
        reference, _ = generate_run(
            tasks=SHORT_TASKS, seed=np.random.SeedSequence([4, 0]), run_id=manifest.run_id
        )
        assert trace.powers == pytest.approx(reference.powers, abs=1e-5)

    def test_power_channel_mode(self, tmp_path):
        trace, _ = generate_run(tasks=SHORT_TASKS, seed=8)
        write_trace_csv(trace, tmp_path / "run.csv", channels="power")
        loaded = load_power_trace(tmp_path / "run.csv")
        assert loaded.powers == pytest.approx(trace.powers, abs=1e-5)

    def test_clean_runs_concentrate(self):
        # pairwise gaps between default-noise clean idle runs stay within a
        # factor of each other; single spikes wash out at full task length
        idle_only = (DEFAULT_TASKS[0],)
        runs = []
        for i in range(6):
            trace, manifest = generate_run(tasks=idle_only, seed=np.random.SeedSequence([11, i]))
            profile = resample_uniform(trace)
            markers = detect_markers(profile)
            segments = segment_tasks(profile, markers, manifest.task_order)
            runs.append(segments[0].profile)
        shortest = min(len(p) for p in runs)
        gaps = []
        for i in range(len(runs)):
            for j in range(i + 1, len(runs)):
                diff = runs[i].values[:shortest] - runs[j].values[:shortest]
                gaps.append(np.sqrt(0.01 * np.sum(diff * diff)))
        gaps = np.array(gaps)
        assert gaps.std() / gaps.mean() < 0.5
