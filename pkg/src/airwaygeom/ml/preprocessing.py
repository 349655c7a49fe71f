"""Feature standardization."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, OneToOneFeatureMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from ._kernels import scaler_stats


class ConstantFeatureError(ValueError):
    pass


class Scaler(OneToOneFeatureMixin, TransformerMixin, BaseEstimator):
    """Subtract the column mean and divide by the population (divide-by-n)
    standard deviation.

    Constant columns are rejected rather than silently passed through.

    Attributes
    ----------
    mean_, scale_ : ndarray of shape (n_features,)
    """

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64, ensure_min_samples=2)
        mean, std = scaler_stats(np.ascontiguousarray(X))
        bad = np.flatnonzero(std == 0.0)
        if bad.size:
            raise ConstantFeatureError(f"constant feature column(s) {bad.tolist()}")
        self.mean_ = mean
        self.scale_ = std
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        return X * self.scale_ + self.mean_

    @classmethod
    def from_stats(cls, mean, std) -> "Scaler":
        """A fitted scaler from stored statistics."""
        mean = np.asarray(mean, dtype=np.float64)
        std = np.asarray(std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("means and stds must be equal-length vectors")
        if np.any(std <= 0) or not np.all(np.isfinite(std)) or not np.all(np.isfinite(mean)):
            raise ValueError("stds must be finite and positive")
        s = cls()
        s.mean_, s.scale_ = mean, std
        s.n_features_in_ = mean.size
        return s


def fit_scaler(data) -> Scaler:
    return Scaler().fit(data)


def apply_scaler(scaler: Scaler, data) -> np.ndarray:
    return scaler.transform(np.atleast_2d(data))
