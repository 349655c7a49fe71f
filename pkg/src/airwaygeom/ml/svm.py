"""Linear soft-margin support vector machine."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_is_fitted, validate_data

from ._kernels import train_dual


class SingleClassError(ValueError):
    pass


class LinearSVM(ClassifierMixin, BaseEstimator):
    """L2-regularized hinge-loss classifier solved in the dual.

    With ``fit_intercept`` the dual is solved by SMO (second-order working
    set selection); without it by cyclic dual coordinate descent.  Both stop
    once the primal-dual gap is at most ``gap_tol``, and both are fully
    deterministic.  Labels are 0 (control) and 1 (ASD); ASD is the positive
    side of the hyperplane.

    Parameters
    ----------
    C : float, default=1.0
    fit_intercept : bool, default=True
    gap_tol : float, default=1e-6

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    intercept_ : float
    dual_gap_ : float
    support_ : ndarray
        Indices of training rows with nonzero dual weight.
    """

    def __init__(self, C=1.0, fit_intercept=True, gap_tol=1e-6):
        self.C = C
        self.fit_intercept = fit_intercept
        self.gap_tol = gap_tol

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        if not self.C > 0:
            raise ValueError("C must be positive")
        self.classes_ = unique_labels(y)
        if not np.isin(self.classes_, (0, 1)).all():
            raise ValueError("labels must be 0 (control) or 1 (ASD)")
        if self.classes_.size < 2:
            raise SingleClassError("training data holds a single class")
        ypm = np.where(y == 1, 1.0, -1.0)
        K = X @ X.T
        alpha, b, gap, _ = train_dual(K, ypm, float(self.C), bool(self.fit_intercept), float(self.gap_tol))
        self.coef_ = X.T @ (alpha * ypm)
        self.intercept_ = float(b)
        self.dual_coef_ = alpha
        self.dual_gap_ = float(gap)
        self.support_ = np.flatnonzero(alpha > 0)
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return X @ self.coef_ + self.intercept_

    def predict(self, X):
        # a score of exactly zero is a negative call
        return (self.decision_function(X) > 0).astype(np.int64)


def train_svm(data, labels, C: float = 1.0, fit_bias: bool = True) -> LinearSVM:
    return LinearSVM(C=C, fit_intercept=fit_bias).fit(data, labels)
