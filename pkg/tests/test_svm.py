import numpy as np
import pytest

from wattprobe.svm import SmoSVC, kernel_matrix


def random_dataset(rng, n=40, separable=True):
    X = rng.normal(size=(n, 3))
    if separable:
        w = rng.normal(size=3)
        w /= np.linalg.norm(w)
        y = np.where(X @ w >= 0, 1, -1)
        X += 0.5 * y[:, None] * w  # push classes apart
    else:
        y = rng.choice([-1, 1], size=n)
    return X, y.astype(float)


class TestTwoPointAnalytic:
    def setup_method(self):
        self.X = np.array([[-1.0, 0.0], [1.0, 0.0]])
        self.y = np.array([-1.0, 1.0])
        self.clf = SmoSVC(kernel="linear", C=1.0).fit(self.X, self.y)

    def test_alphas(self):
        assert self.clf.alpha_ == pytest.approx([0.5, 0.5], abs=1e-6)

    def test_weight_vector_and_bias(self):
        signs = np.where(self.y > 0, 1.0, -1.0)
        Xs = (self.X - self.clf.scaler_mean_) / self.clf.scaler_std_
        w = (self.clf.alpha_ * signs) @ Xs
        assert w == pytest.approx([1.0, 0.0], abs=1e-6)
        assert self.clf.intercept_ == pytest.approx(0.0, abs=1e-6)

    def test_decision_is_first_coordinate(self):
        assert self.clf.decision_function([[2.0, 0.0]])[0] == pytest.approx(2.0, abs=1e-6)

    def test_predictions(self):
        assert self.clf.predict([[2.0, 0.0]])[0] == 1
        assert self.clf.predict([[-2.0, 0.0]])[0] == -1

    def test_zero_maps_to_positive(self):
        assert self.clf.predict([[0.0, 0.0]])[0] == 1


class TestXor:
    def test_rbf_solves_xor(self):
        X = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
        y = X[:, 0] * X[:, 1]
        clf = SmoSVC(kernel="rbf", gamma=1.0, C=1.0).fit(X, y)
        assert np.array_equal(clf.predict(X), y)

    def test_linear_cannot_solve_xor(self):
        X = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
        y = X[:, 0] * X[:, 1]
        clf = SmoSVC(kernel="linear", C=1.0).fit(X, y)
        assert (clf.predict(X) == y).sum() < 4


class TestKktAndInvariants:
    @pytest.mark.parametrize("separable", [True, False])
    @pytest.mark.parametrize("kernel", ["linear", "rbf"])
    def test_kkt_residuals_within_tol(self, separable, kernel):
        for seed in range(12):
            rng = np.random.default_rng(seed)
            X, y = random_dataset(rng, n=30, separable=separable)
            clf = SmoSVC(kernel=kernel, gamma=0.5, C=1.0, tol=1e-3).fit(X, y)
            assert clf.converged_
            assert clf.kkt_residuals(X, y).max() <= clf.tol + 1e-9

    def test_dual_balance(self):
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            X, y = random_dataset(rng, n=35, separable=seed % 2 == 0)
            clf = SmoSVC(kernel="rbf", gamma=0.3, C=2.0).fit(X, y)
            signs = np.where(y == clf.classes_[1], 1.0, -1.0)
            assert abs(np.sum(clf.alpha_ * signs)) <= 1e-8
            assert np.all(clf.alpha_ >= -1e-12)
            assert np.all(clf.alpha_ <= clf.C + 1e-12)

    def test_separable_blobs_perfect_training_accuracy(self):
        rng = np.random.default_rng(7)
        X = np.vstack([rng.normal(-3, 0.5, (20, 2)), rng.normal(3, 0.5, (20, 2))])
        y = np.array([-1.0] * 20 + [1.0] * 20)
        clf = SmoSVC(kernel="linear", C=1.0).fit(X, y)
        assert np.array_equal(clf.predict(X), y)

    def test_single_class_rejected(self):
        X = np.zeros((4, 2))
        with pytest.raises(ValueError, match="two classes"):
            SmoSVC().fit(X, np.ones(4))

    def test_non_finite_rejected(self):
        X = np.array([[np.nan, 0.0], [1.0, 2.0]])
        with pytest.raises(ValueError, match="non-finite"):
            SmoSVC().fit(X, np.array([-1.0, 1.0]))

    def test_dimension_mismatch_on_predict(self):
        X = np.array([[-1.0, 0.0], [1.0, 0.0]])
        clf = SmoSVC().fit(X, np.array([-1.0, 1.0]))
        with pytest.raises(ValueError, match="features"):
            clf.predict([[1.0, 2.0, 3.0]])

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(3)
        X, y = random_dataset(rng, n=30, separable=False)
        a = SmoSVC(kernel="rbf", gamma=0.2, random_state=5).fit(X, y)
        b = SmoSVC(kernel="rbf", gamma=0.2, random_state=5).fit(X, y)
        assert a.alpha_ == pytest.approx(b.alpha_)
        assert a.intercept_ == pytest.approx(b.intercept_)


class TestKernels:
    def test_poly_kernel_values(self):
        X = np.array([[1.0, 2.0]])
        Y = np.array([[3.0, 4.0]])
        K = kernel_matrix("poly", X, Y, degree=2, coef0=1.0)
        assert K[0, 0] == pytest.approx((1 * 3 + 2 * 4 + 1) ** 2)

    def test_rbf_kernel_diagonal_is_one(self):
        X = np.random.default_rng(0).normal(size=(5, 3))
        K = kernel_matrix("rbf", X, X, gamma=0.7)
        assert np.diag(K) == pytest.approx(np.ones(5))

    def test_unknown_kernel(self):
        with pytest.raises(ValueError, match="unknown kernel"):
            kernel_matrix("sigmoid", np.zeros((1, 1)), np.zeros((1, 1)))

    def test_get_params_roundtrip(self):
        clf = SmoSVC(kernel="poly", degree=2, C=3.0)
        params = clf.get_params()
        assert params["degree"] == 2 and params["C"] == 3.0
