"""Leave-one-out cross-validation of the scale / PCA / linear SVM pipeline."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.pipeline import Pipeline

from ._kernels import confusion, loocv_predictions
from .dataset import Dataset
from .pca import PCA
from .preprocessing import Scaler
from .svm import LinearSVM

PCA_SCOPES = ("fold", "global")
GAP_TOL = 1e-6


@dataclass
class CvMetrics:
    tp: int
    tn: int
    fp: int
    fn: int
    predictions: np.ndarray = field(repr=False)
    # folds whose training rows held one class and fell back to it
    flagged_folds: tuple[int, ...] = ()

    def __post_init__(self):
        self.predictions = np.asarray(self.predictions, dtype=np.int64)
        assert self.tp + self.tn + self.fp + self.fn == self.predictions.size

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def correct(self) -> int:
        return self.tp + self.tn

    @property
    def accuracy(self) -> float:
        return self.correct / self.n

    @property
    def sensitivity(self) -> float:
        pos = self.tp + self.fn
        return self.tp / pos if pos else float("nan")

    @property
    def specificity(self) -> float:
        neg = self.tn + self.fp
        return self.tn / neg if neg else float("nan")

    def rank_key(self) -> tuple[int, int]:
        """Larger is better: correct calls, then correct negatives."""
        return self.correct, self.tn

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy, "sensitivity": self.sensitivity, "specificity": self.specificity,
            "tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn,
            "predictions": self.predictions.tolist(), "flagged_folds": list(self.flagged_folds),
        }

    @classmethod
    def from_predictions(cls, predictions, labels, flagged=()) -> "CvMetrics":
        predictions = np.asarray(predictions, dtype=np.int64)
        tp, tn, fp, fn = confusion(predictions, np.asarray(labels, dtype=np.int64))
        return cls(int(tp), int(tn), int(fp), int(fn), predictions, tuple(int(f) for f in flagged))


def make_classifier(k=None, C=1.0, fit_bias=True) -> Pipeline:
    """Scaler, PCA keeping ``k`` components, linear SVM."""
    return Pipeline([
        ("scale", Scaler()),
        ("pca", PCA(n_components=k)),
        ("svm", LinearSVM(C=C, fit_intercept=fit_bias)),
    ])


def _check_scope(pca_scope: str) -> None:
    if pca_scope not in PCA_SCOPES:
        raise ValueError(f"pca_scope must be one of {PCA_SCOPES}, got {pca_scope!r}")


def loocv_curve(dataset: Dataset, subset, C: float = 1.0, pca_scope: str = "fold",
                fit_bias: bool = True, kmax: int | None = None) -> list[CvMetrics]:
    """LOOCV metrics for k = 1..kmax components (default: all of them).

    ``fold`` scope refits the scaler and PCA on every training fold;
    ``global`` fits them once on all rows.  The SVM is always refit per fold.
    """
    _check_scope(pca_scope)
    X = np.ascontiguousarray(dataset.columns(subset))
    m = X.shape[1]
    kmax = m if kmax is None else kmax
    if not 1 <= kmax <= m:
        raise ValueError(f"k must lie in [1, {m}]")
    if dataset.n < 3:
        raise ValueError("LOOCV needs at least three subjects")
    y = dataset.labels
    preds, single = loocv_predictions(X, y, kmax, float(C), bool(fit_bias), pca_scope == "global", GAP_TOL)
    flagged = tuple(np.flatnonzero(single))
    return [CvMetrics.from_predictions(preds[k], y, flagged) for k in range(kmax)]


def loocv_evaluate(dataset: Dataset, subset, k: int, C: float = 1.0, pca_scope: str = "fold",
                   fit_bias: bool = True) -> CvMetrics:
    """Held-out metrics over exactly ``n`` folds with ``k`` principal components."""
    if k < 1 or k > len(subset):
        raise ValueError(f"k must lie in [1, {len(subset)}]")
    return loocv_curve(dataset, subset, C, pca_scope, fit_bias, kmax=k)[k - 1]
