"""Angle classification: standardize, project onto principal components,
separate with a linear SVM, and judge by leave-one-out cross-validation."""
from .dataset import Dataset, DatasetError, planted_dataset, read_dataset, write_dataset
from .pca import PCA, fit_pca, project
from .preprocessing import ConstantFeatureError, Scaler, apply_scaler, fit_scaler
from .search import SearchResult, SizeResult, SweepResult, format_table, greedy_extend, pc_sweep, subset_search
from .svm import LinearSVM, SingleClassError, train_svm
from .validation import CvMetrics, loocv_curve, loocv_evaluate, make_classifier

__all__ = [
    "ConstantFeatureError", "CvMetrics", "Dataset", "DatasetError", "LinearSVM", "PCA", "Scaler",
    "SearchResult", "SingleClassError", "SizeResult", "SweepResult", "apply_scaler", "fit_pca",
    "fit_scaler", "format_table", "greedy_extend", "loocv_curve", "loocv_evaluate", "make_classifier",
    "pc_sweep", "planted_dataset", "project", "read_dataset", "subset_search", "train_svm", "write_dataset",
]
