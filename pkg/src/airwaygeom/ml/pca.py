"""Principal components by singular value decomposition."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from ._kernels import pca_components


class PCA(TransformerMixin, BaseEstimator):
    """Projection onto the leading right singular vectors of the data.

    The data is expected to be centred already (standardize first); no mean
    is removed here, matching the pipeline where the scaler does that.  Each
    component's largest-magnitude entry is made positive so the result does
    not depend on the LAPACK build.

    Parameters
    ----------
    n_components : int or None
        Number of components kept; ``None`` keeps all of them.

    Attributes
    ----------
    components_ : ndarray of shape (n_components, n_features)
    singular_values_ : ndarray of shape (n_components,)
    explained_variance_ratio_ : ndarray of shape (n_components,)
    """

    def __init__(self, n_components=None):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64, ensure_min_samples=1)
        m = X.shape[1]
        k = m if self.n_components is None else self.n_components
        if not isinstance(k, (int, np.integer)) or not 1 <= k <= m:
            raise ValueError(f"n_components must be an integer in [1, {m}], got {k!r}")
        comps, s = pca_components(np.ascontiguousarray(X))
        self.components_ = comps[:k]
        self.singular_values_ = s[:k]
        total = float(np.sum(s ** 2))
        self.explained_variance_ratio_ = s[:k] ** 2 / total if total > 0 else np.zeros(k)
        self.n_components_ = int(k)
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return X @ self.components_.T

    def inverse_transform(self, Z):
        check_is_fitted(self)
        Z = check_array(Z, dtype=np.float64)
        return Z @ self.components_


def fit_pca(data, k: int) -> PCA:
    return PCA(n_components=k).fit(data)


def project(model: PCA, row) -> np.ndarray:
    """k-vector for one (already normalized) row."""
    return model.transform(np.asarray(row, dtype=np.float64).reshape(1, -1))[0]
