import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from wattprobe.features import (
    ConstantInputError,
    FeatureConfig,
    PermutationModel,
    TaskModels,
    extract_features,
    l2_distance,
    learn_baseline,
    learn_permutation_model,
    learn_task_models,
    moments,
    perm_entropy,
    window_permutation,
)
from wattprobe.trace import TaskSegment, UniformProfile


def profile(values, dt=0.01):
    return UniformProfile(dt=dt, values=np.asarray(values, dtype=float))


def exact_moments(values):
    """Independent oracle: exact rational arithmetic, one final rounding."""
    xs = [Fraction(v) for v in values]
    n = len(xs)
    mu = sum(xs) / n
    m2 = sum((x - mu) ** 2 for x in xs) / n
    m3 = sum((x - mu) ** 3 for x in xs) / n
    m4 = sum((x - mu) ** 4 for x in xs) / n
    sigma = math.sqrt(m2)
    return float(mu), float(m2), float(m3) / sigma**3, float(m4 / (m2 * m2)) - 3.0


class TestMoments:
    def test_hand_example(self):
        m = moments(profile([1, 2, 3, 4]))
        assert m.mean == pytest.approx(2.5)
        assert m.variance == pytest.approx(1.25)
        assert m.skewness == pytest.approx(0.0, abs=1e-12)
        assert m.kurtosis == pytest.approx(-1.36)

    def test_symmetric_data_zero_skew(self):
        m = moments(profile([1, 2, 2, 3, 10, 11, 11, 12]))
        assert m.skewness == pytest.approx(0.0, abs=1e-12)

    def test_against_exact_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            values = rng.uniform(-50, 50, size=rng.integers(4, 40))
            m = moments(profile(values))
            mu, var, skew, kurt = exact_moments(values)
            assert m.mean == pytest.approx(mu, rel=1e-9, abs=1e-12)
            assert m.variance == pytest.approx(var, rel=1e-9, abs=1e-12)
            assert m.skewness == pytest.approx(skew, rel=1e-9, abs=1e-9)
            assert m.kurtosis == pytest.approx(kurt, rel=1e-9, abs=1e-9)

    def test_standard_normal_kurtosis_near_zero(self):
        rng = np.random.default_rng(123)
        m = moments(profile(rng.standard_normal(1_000_000)))
        assert abs(m.kurtosis) < 0.05

    def test_constant_input_raises(self):
        with pytest.raises(ConstantInputError):
            moments(profile([7.0, 7.0, 7.0]))

    def test_kurtosis_lower_bound(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            values = rng.normal(size=10) * rng.uniform(0.1, 10)
            assert moments(profile(values)).kurtosis >= -2.0 - 1e-12


class TestLearnBaseline:
    def test_identical_profiles(self):
        p = profile(np.linspace(10, 20, 400))
        base = learn_baseline([p] * 10, "idle", seed=0)
        assert base.values == pytest.approx(p.values)

    def test_noisy_copies_of_template(self):
        rng = np.random.default_rng(1)
        template = 20 + 3 * np.sin(np.linspace(0, 6 * np.pi, 500))
        noise_sd = 0.5
        training = [profile(template + rng.normal(0, noise_sd, 500)) for _ in range(10)]
        base = learn_baseline(training, "idle", seed=2)
        assert np.max(np.abs(base.values - template)) < 5 * noise_sd / np.sqrt(10)

    def test_two_mode_corpus_warns_and_picks_largest(self):
        rng = np.random.default_rng(2)
        low = [profile(10 + rng.normal(0, 0.1, 300)) for _ in range(6)]
        high = [profile(50 + rng.normal(0, 0.1, 300)) for _ in range(4)]
        with pytest.warns(UserWarning, match="clusters"):
            base = learn_baseline(low + high, "idle", seed=3)
        assert base.values.mean() == pytest.approx(10.0, abs=0.5)

    def test_truncates_to_shortest(self):
        training = [profile(np.ones(300)), profile(np.ones(280) * 3)]
        base = learn_baseline(training, "idle", seed=0)
        assert len(base) == 280

    def test_empty_training(self):
        with pytest.raises(ValueError, match="no training"):
            learn_baseline([], "idle")


class TestL2Distance:
    def test_identity(self):
        p = profile(np.linspace(0, 5, 200))
        base = learn_baseline([p, p], "t", seed=0)
        assert l2_distance(p, base) == pytest.approx(0.0, abs=1e-12)

    def test_closed_form_constant_gap(self):
        base = learn_baseline([profile(np.zeros(100))] * 2, "t", seed=0)
        p = profile(np.ones(100))
        assert l2_distance(p, base) == pytest.approx(1.0)

    def test_homogeneity(self):
        rng = np.random.default_rng(4)
        base_values = rng.uniform(0, 10, 150)
        base = learn_baseline([profile(base_values)] * 2, "t", seed=0)
        gap = rng.uniform(0, 1, 150)
        d1 = l2_distance(profile(base_values + gap), base)
        d3 = l2_distance(profile(base_values + 3 * gap), base)
        assert d3 == pytest.approx(3 * d1)

    def test_dt_mismatch(self):
        base = learn_baseline([profile(np.zeros(100))] * 2, "t", seed=0)
        with pytest.raises(ValueError, match="dt mismatch"):
            l2_distance(profile(np.ones(100), dt=0.02), base)


class TestWindowPermutation:
    def test_direct_sort(self):
        assert window_permutation([2.1, 1.0, 3.5]) == (1, 0, 2)

    def test_stable_tie_rule(self):
        assert window_permutation([1.0, 1.0, 0.5]) == (2, 0, 1)

    def test_identity_on_sorted(self):
        assert window_permutation([1, 2, 3, 4]) == (0, 1, 2, 3)


class TestPermutationModel:
    def test_window_count_arithmetic(self):
        model = learn_permutation_model([profile(np.arange(12.0))], m=6)
        assert model.total == 3  # starts 0, 3, 6

    def test_map_formula(self):
        model = PermutationModel(
            m=3, counts={(0, 1, 2): 5, (2, 1, 0): 95}, total=100
        )
        assert model.probability((0, 1, 2)) == pytest.approx(6 / 106)
        assert model.probability((1, 0, 2)) == pytest.approx(1 / 106)

    def test_probabilities_sum_to_one_with_floor(self):
        rng = np.random.default_rng(0)
        model = learn_permutation_model([profile(rng.uniform(0, 1, 500))], m=4)
        perms = list(itertools.permutations(range(4)))
        total_p = sum(model.probability(g) for g in perms)
        assert total_p == pytest.approx(1.0, abs=1e-12)
        floor = 1 / (model.total + math.factorial(4))
        assert all(model.probability(g) >= floor - 1e-15 for g in perms)

    def test_analytic_entropy_matches_brute_force(self):
        rng = np.random.default_rng(1)
        model = learn_permutation_model([profile(rng.uniform(0, 1, 2000))], m=4)
        probs = [model.probability(g) for g in itertools.permutations(range(4))]
        brute_h = -sum(p * math.log(p) for p in probs)
        brute_second = sum(p * math.log(p) ** 2 for p in probs)
        brute_std = math.sqrt(brute_second - brute_h**2)
        assert model.entropy == pytest.approx(brute_h, abs=1e-12)
        assert model.information_std == pytest.approx(brute_std, abs=1e-12)

    def test_zero_observations_raise(self):
        # profiles shorter than one window leave the distribution uniform
        with pytest.raises(ValueError, match="no permutation"):
            learn_permutation_model([profile(np.arange(4.0))], m=6)
        # a single observed window already breaks uniformity
        model = learn_permutation_model([profile(np.arange(12.0))], m=6)
        assert model.information_std > 0

    def test_roundtrip(self):
        rng = np.random.default_rng(3)
        model = learn_permutation_model([profile(rng.uniform(0, 1, 300))], m=4)
        again = PermutationModel.from_dict(model.to_dict())
        assert again.entropy == pytest.approx(model.entropy)
        assert again.counts == model.counts


class TestPermEntropy:
    def test_constant_quarter_information(self):
        # two observed permutations at count 1 under m=3 land exactly on
        # P = (1+1)/(2+6) = 0.25; a profile visiting only those patterns
        # has constant information -ln 0.25
        model = PermutationModel(m=3, counts={(0, 1, 2): 1, (2, 1, 0): 1}, total=2)
        assert model.probability((0, 1, 2)) == pytest.approx(0.25)
        rising = profile(np.arange(10.0))
        assert perm_entropy(rising, model) == pytest.approx(-math.log(0.25))

    def test_iid_sampling_concentrates_on_entropy(self):
        rng = np.random.default_rng(2)
        model = learn_permutation_model([profile(rng.uniform(0, 1, 3000))], m=4)
        perms = list(itertools.permutations(range(4)))
        probs = np.array([model.probability(g) for g in perms])
        weights = model.m ** np.arange(model.m - 1, -1, -1)
        codes = np.array([np.dot(g, weights) for g in perms])
        n = 4096
        hits = 0
        trials = 60
        for t in range(trials):
            sample_rng = np.random.default_rng(100 + t)
            drawn = sample_rng.choice(codes, size=n, p=probs)
            h_hat = float(model.self_information(drawn).mean())
            if abs(h_hat - model.entropy) <= 3 * model.information_std / math.sqrt(n):
                hits += 1
        assert hits >= int(0.93 * trials)

    def test_training_profile_positive_finite(self):
        rng = np.random.default_rng(5)
        values = rng.uniform(0, 1, 800)
        model = learn_permutation_model([profile(values)], m=4)
        h = perm_entropy(profile(values), model)
        assert 0 < h < 20

    def test_weighted_variant_differs(self):
        rng = np.random.default_rng(6)
        values = rng.uniform(0, 1, 800)
        model = learn_permutation_model([profile(values)], m=4)
        h_mean = perm_entropy(profile(values), model)
        h_weighted = perm_entropy(profile(values), model, estimator="weighted_self_information")
        assert h_weighted != pytest.approx(h_mean)
        assert h_weighted < h_mean


def make_task_models(rng, task="browser", n_train=4, n=2000, cfg=None):
    cfg = cfg or FeatureConfig(pe_window=4, repeats=20)
    training = [profile(20 + rng.normal(0, 1, n)) for _ in range(n_train)]
    return learn_task_models(task, training, cfg=cfg, seed=0), cfg, training


class TestExtractFeatures:
    def test_near_baseline_run(self):
        rng = np.random.default_rng(7)
        models, cfg, training = make_task_models(rng)
        seg = TaskSegment(task="browser", profile=training[0], run_id="r0")
        fv = extract_features([seg], {"browser": models}, cfg)
        values = fv.tasks["browser"]
        # an in-sample run's gap to the 4-run mean has variance sd^2 * 3/4
        expected_l2 = math.sqrt(0.01 * 2000 * 1.0 * 0.75)
        assert values["l2"] == pytest.approx(expected_l2, rel=0.2)
        assert values["mean"] == pytest.approx(20.0, abs=0.5)

    def test_idle_never_carries_shape_distance(self):
        rng = np.random.default_rng(8)
        models, cfg, training = make_task_models(rng, task="idle")
        assert models.shapes is None
        seg = TaskSegment(task="idle", profile=training[0], run_id="r0")
        fv = extract_features([seg], {"idle": models}, cfg)
        assert "dsd_shape" not in fv.tasks["idle"]

    def test_constant_segment_isolates_moment_errors(self):
        rng = np.random.default_rng(9)
        models, cfg, training = make_task_models(rng)
        seg = TaskSegment(task="browser", profile=profile(np.full(2000, 20.0)), run_id="r1")
        fv = extract_features([seg], {"browser": models}, cfg)
        values = fv.tasks["browser"]
        assert "skewness" not in values and "kurtosis" not in values
        assert fv.errors["browser"]["skewness"]
        assert values["mean"] == pytest.approx(20.0)
        assert values["variance"] == 0.0
        assert "l2" in values and "perm_entropy" in values

    def test_missing_model_raises(self):
        rng = np.random.default_rng(10)
        models, cfg, training = make_task_models(rng)
        seg = TaskSegment(task="registry", profile=training[0], run_id="r2")
        with pytest.raises(ValueError, match="no models"):
            extract_features([seg], {"browser": models}, cfg)

    def test_deterministic(self):
        rng = np.random.default_rng(11)
        models, cfg, training = make_task_models(rng)
        seg = TaskSegment(task="browser", profile=training[1], run_id="r3")
        fv1 = extract_features([seg], {"browser": models}, cfg)
        fv2 = extract_features([seg], {"browser": models}, cfg)
        assert fv1.flat() == fv2.flat()

    def test_task_models_roundtrip(self):
        rng = np.random.default_rng(12)
        models, cfg, training = make_task_models(rng)
        again = TaskModels.from_dict(models.to_dict())
        assert np.allclose(again.baseline.values, models.baseline.values)
        assert again.permutation.counts == models.permutation.counts
        assert np.array_equal(
            again.reference_shape_stream.symbols, models.reference_shape_stream.symbols
        )
