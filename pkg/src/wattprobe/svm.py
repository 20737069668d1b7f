"""Soft-margin kernel SVM trained by sequential minimal optimization.

The dual problem is solved two multipliers at a time: pick a pair that
violates the optimality conditions, solve that 2-variable subproblem in
closed form, repeat until no violators remain. Features are standardized
to training mean/std inside fit.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from wattprobe.validation import as_points_matrix, check_fitted

KERNELS = ("linear", "rbf", "poly")


def kernel_matrix(kind, X, Y, gamma=0.1, degree=3, coef0=1.0):
    if kind == "linear":
        return X @ Y.T
    if kind == "rbf":
        sq = (
            np.sum(X * X, axis=1)[:, None]
            - 2.0 * X @ Y.T
            + np.sum(Y * Y, axis=1)[None, :]
        )
        return np.exp(-gamma * np.maximum(sq, 0.0))
    if kind == "poly":
        return (X @ Y.T + coef0) ** degree
    raise ValueError(f"unknown kernel {kind!r}; expected one of {KERNELS}")


class SmoSVC(BaseEstimator, ClassifierMixin):
    """Binary kernel SVM with an SMO dual solver.

    Parameters
    ----------
    kernel : 'linear', 'rbf', or 'poly'.
    C : soft-margin penalty.
    gamma : RBF width.
    degree, coef0 : polynomial kernel parameters.
    tol : optimality tolerance; at convergence every multiplier satisfies
        its margin condition to within tol.
    max_sweeps : safety bound on passes over the training set.
    random_state : seeds the pair-selection fallbacks.
    """

    def __init__(
        self,
        kernel="linear",
        C=1.0,
        gamma=0.1,
        degree=3,
        coef0=1.0,
        tol=1e-3,
        max_sweeps=10_000,
        random_state=0,
    ):
        self.kernel = kernel
        self.C = C
        self.gamma = gamma
        self.degree = degree
        self.coef0 = coef0
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.random_state = random_state

    def _kernel(self, X, Y):
        return kernel_matrix(
            self.kernel, X, Y, gamma=self.gamma, degree=self.degree, coef0=self.coef0
        )

    def fit(self, X, y):
        X = as_points_matrix(X, "X")
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one label per row of X")
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError(f"need exactly two classes, got {self.classes_.tolist()}")
        signs = np.where(y == self.classes_[1], 1.0, -1.0)

        self.scaler_mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        self.scaler_std_ = scale
        Xs = (X - self.scaler_mean_) / self.scaler_std_

        n = Xs.shape[0]
        K = self._kernel(Xs, Xs)
        alpha = np.zeros(n)
        b = 0.0
        f = np.zeros(n)  # decision values including b
        rng = np.random.default_rng(self.random_state)
        C, tol = self.C, self.tol
        eps = 1e-12

        def take_step(i1, i2):
            nonlocal b, f
            if i1 == i2:
                return False
            a1, a2 = alpha[i1], alpha[i2]
            y1, y2 = signs[i1], signs[i2]
            e1, e2 = f[i1] - y1, f[i2] - y2
            s = y1 * y2
            if s > 0:
                low, high = max(0.0, a1 + a2 - C), min(C, a1 + a2)
            else:
                low, high = max(0.0, a2 - a1), min(C, C + a2 - a1)
            if high - low < eps:
                return False
            k11, k12, k22 = K[i1, i1], K[i1, i2], K[i2, i2]
            eta = k11 + k22 - 2.0 * k12
            if eta > 0:
                a2_new = a2 + y2 * (e1 - e2) / eta
                a2_new = min(max(a2_new, low), high)
            else:
                # flat or concave direction: test the box ends
                f1 = y1 * e1 - a1 * k11 - s * a2 * k12
                f2 = y2 * e2 - s * a1 * k12 - a2 * k22
                l1 = a1 + s * (a2 - low)
                h1 = a1 + s * (a2 - high)
                obj_low = l1 * f1 + low * f2 + 0.5 * l1 * l1 * k11 + 0.5 * low * low * k22 + s * low * l1 * k12
                obj_high = h1 * f1 + high * f2 + 0.5 * h1 * h1 * k11 + 0.5 * high * high * k22 + s * high * h1 * k12
                if obj_low < obj_high - 1e-9:
                    a2_new = low
                elif obj_low > obj_high + 1e-9:
                    a2_new = high
                else:
                    return False
            if abs(a2_new - a2) < eps * (a2_new + a2 + eps):
                return False
            a1_new = a1 + s * (a2 - a2_new)
            # numerical snap to the box
            if a1_new < 1e-10:
                a1_new = 0.0
            elif a1_new > C - 1e-10:
                a1_new = C
            d1, d2 = a1_new - a1, a2_new - a2
            b1 = b - e1 - y1 * d1 * k11 - y2 * d2 * k12
            b2 = b - e2 - y1 * d1 * k12 - y2 * d2 * k22
            if 0.0 < a1_new < C:
                b_new = b1
            elif 0.0 < a2_new < C:
                b_new = b2
            else:
                b_new = 0.5 * (b1 + b2)
            alpha[i1], alpha[i2] = a1_new, a2_new
            f += y1 * d1 * K[:, i1] + y2 * d2 * K[:, i2] + (b_new - b)
            b = b_new
            return True

        def examine(i2):
            y2 = signs[i2]
            e2 = f[i2] - y2
            r2 = e2 * y2
            if not ((r2 < -tol and alpha[i2] < C) or (r2 > tol and alpha[i2] > 0)):
                return 0
            errors = f - signs
            non_bound = np.flatnonzero((alpha > 0) & (alpha < C))
            if non_bound.size > 1:
                i1 = int(non_bound[np.argmax(np.abs(errors[non_bound] - e2))])
                if take_step(i1, i2):
                    return 1
            for i1 in rng.permutation(non_bound):
                if take_step(int(i1), i2):
                    return 1
            for i1 in rng.permutation(n):
                if take_step(int(i1), i2):
                    return 1
            return 0

        examine_all = True
        sweeps = 0
        self.converged_ = False
        while sweeps < self.max_sweeps:
            sweeps += 1
            if examine_all:
                changed = sum(examine(i) for i in range(n))
            else:
                candidates = np.flatnonzero((alpha > 0) & (alpha < C))
                changed = sum(examine(int(i)) for i in candidates)
            if examine_all:
                if changed == 0:
                    self.converged_ = True
                    break
                examine_all = False
            elif changed == 0:
                examine_all = True
        self.n_sweeps_ = sweeps

        support = alpha > 1e-10
        self.support_ = np.flatnonzero(support)
        self.support_vectors_ = Xs[support]
        self.alpha_ = alpha
        self.dual_coef_ = (alpha * signs)[support]
        self.intercept_ = float(b)
        return self

    def decision_function(self, X):
        check_fitted(self, "support_")
        X = as_points_matrix(X, "X")
        if X.shape[1] != self.scaler_mean_.size:
            raise ValueError(
                f"expected {self.scaler_mean_.size} features, got {X.shape[1]}"
            )
        Xs = (X - self.scaler_mean_) / self.scaler_std_
        if self.support_vectors_.shape[0] == 0:
            return np.full(X.shape[0], self.intercept_)
        K = self._kernel(Xs, self.support_vectors_)
        return K @ self.dual_coef_ + self.intercept_

    def predict(self, X):
        # a decision value of exactly zero goes to the positive class
        return self.classes_[(self.decision_function(X) >= 0).astype(int)]

    def kkt_residuals(self, X, y):
        """Per-example violation of the margin conditions (0 when satisfied).

        Multipliers at 0 must have margin >= 1, bound ones must have
        margin <= 1, and interior ones must sit on the margin.
        """
        check_fitted(self, "support_")
        X = as_points_matrix(X, "X")
        signs = np.where(np.asarray(y) == self.classes_[1], 1.0, -1.0)
        margins = signs * self.decision_function(X)
        res = np.zeros(len(margins))
        at_zero = self.alpha_ <= 1e-10
        at_c = self.alpha_ >= self.C - 1e-10
        interior = ~at_zero & ~at_c
        res[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
        res[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
        res[interior] = np.abs(margins[interior] - 1.0)
        return res
