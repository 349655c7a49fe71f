"""Principal-component sweep, exhaustive subset search, greedy extension."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from ._kernels import evaluate_subsets
from .dataset import Dataset
from .validation import GAP_TOL, CvMetrics, _check_scope, loocv_curve, loocv_evaluate

logger = logging.getLogger(__name__)

# prefer OpenMP; an outdated TBB only produces a warning before being skipped
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@dataclass
class SweepResult:
    entries: list[tuple[int, CvMetrics]]
    best_k: int

    def to_dict(self) -> dict:
        return {"best_k": self.best_k,
                "curve": [{"k": k, **m.to_dict()} for k, m in self.entries]}


@dataclass
class SizeResult:
    size: int
    subset: tuple[str, ...]
    k: int
    metrics: CvMetrics
    evaluated: int

    def to_dict(self) -> dict:
        return {"size": self.size, "angles": list(self.subset), "k": self.k,
                "evaluated": self.evaluated, **self.metrics.to_dict()}


@dataclass
class SearchResult:
    pool: tuple[str, ...]
    rows: list[SizeResult]
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"pool": list(self.pool), "params": self.params, "sizes": [r.to_dict() for r in self.rows]}


def canonical_pool(pool) -> tuple[str, ...]:
    """Pool codes as unique strings in lexicographic order."""
    codes = sorted({str(c) for c in pool})
    if not codes:
        raise ValueError("feature pool is empty")
    return tuple(codes)


def pc_sweep(dataset: Dataset, pool, C: float = 1.0, pca_scope: str = "fold", fit_bias: bool = True) -> SweepResult:
    """LOOCV accuracy for every k = 1..|pool|; the best k is the most
    accurate, the smallest one on ties."""
    pool = canonical_pool(pool)
    curve = loocv_curve(dataset, pool, C, pca_scope, fit_bias)
    entries = list(zip(range(1, len(pool) + 1), curve))
    best_k = max(entries, key=lambda e: (e[1].correct, -e[0]))[0]
    return SweepResult(entries, best_k)


def set_threads(threads: int | None) -> int:
    """Clamp and apply the worker count for the compiled search."""
    limit = numba.config.NUMBA_NUM_THREADS
    if threads is None:
        threads = limit
    if threads < 1:
        raise ValueError("threads must be at least 1")
    if threads > limit:
        logger.warning("only %d worker threads available; using %d", limit, limit)
        threads = limit
    numba.set_num_threads(threads)
    return threads


def _best_row(results: np.ndarray, combos: np.ndarray) -> int:
    # accuracy, then specificity (both descending), then k, then subset (ascending)
    keys = [combos[:, j] for j in range(combos.shape[1] - 1, -1, -1)]
    keys += [results[:, 0], -results[:, 2], -(results[:, 1] + results[:, 2])]
    return int(np.lexsort(keys)[0])


def _evaluate(dataset, pool, combos, C, pca_scope, fit_bias):
    X = np.ascontiguousarray(dataset.columns(pool))
    return evaluate_subsets(X, dataset.labels, np.ascontiguousarray(combos, dtype=np.int64), float(C),
                            bool(fit_bias), pca_scope == "global", GAP_TOL)


def _size_result(dataset, pool, combo, row, C, pca_scope, fit_bias, evaluated) -> SizeResult:
    subset = tuple(pool[i] for i in combo)
    k = int(row[0])
    metrics = loocv_evaluate(dataset, subset, k, C, pca_scope, fit_bias)
    assert (metrics.tp, metrics.tn, metrics.fp, metrics.fn) == tuple(int(v) for v in row[1:])
    return SizeResult(len(subset), subset, k, metrics, evaluated)


def subset_search(dataset: Dataset, pool, max_size: int = 8, C: float = 1.0, pca_scope: str = "fold",
                  fit_bias: bool = True, threads: int | None = None, min_size: int = 1) -> SearchResult:
    """Evaluate every subset of each size in ``min_size..max_size`` over all
    k = 1..size and keep the best per size.

    Ties are broken by higher specificity, then smaller k, then the
    lexicographically smaller subset.  The outcome does not depend on the
    thread count: results land in a fixed slot per subset and the winner is
    picked by a total order afterwards.
    """
    _check_scope(pca_scope)
    pool = canonical_pool(pool)
    if not 1 <= min_size <= max_size <= len(pool):
        raise ValueError(f"sizes must satisfy 1 <= min_size <= max_size <= {len(pool)}")
    used = set_threads(threads)
    rows = []
    for s in range(min_size, max_size + 1):
        combos = np.array(list(itertools.combinations(range(len(pool)), s)), dtype=np.int64)
        assert len(combos) == math.comb(len(pool), s)
        results = _evaluate(dataset, pool, combos, C, pca_scope, fit_bias)
        best = _best_row(results, combos)
        rows.append(_size_result(dataset, pool, combos[best], results[best], C, pca_scope, fit_bias, len(combos)))
        logger.info("size %d: %d subsets, best %s", s, len(combos), ",".join(rows[-1].subset))
    params = {"max_size": max_size, "min_size": min_size, "C": C, "pca_scope": pca_scope,
              "fit_bias": fit_bias, "threads": used}
    return SearchResult(pool, rows, params)


def greedy_extend(dataset: Dataset, seed_subset, pool, C: float = 1.0, pca_scope: str = "fold",
                  fit_bias: bool = True, threads: int | None = None, max_size: int | None = None) -> SearchResult:
    """Grow the seed subset one angle at a time.

    Step ``i`` (current size ``i``) tries the ``|pool| - i`` supersets made by
    adding one unused angle and keeps the best under the subset-search order.
    The first row is the seed itself, evaluated once.
    """
    _check_scope(pca_scope)
    pool = canonical_pool(pool)
    index = {c: i for i, c in enumerate(pool)}
    seed = sorted({str(c) for c in seed_subset})
    missing = [c for c in seed if c not in index]
    if missing:
        raise ValueError(f"seed angles not in pool: {', '.join(missing)}")
    if not seed:
        raise ValueError("seed subset is empty")
    max_size = len(pool) if max_size is None else max_size
    used = set_threads(threads)
    current = np.array(sorted(index[c] for c in seed), dtype=np.int64)
    results = _evaluate(dataset, pool, current[None, :], C, pca_scope, fit_bias)
    rows = [_size_result(dataset, pool, current, results[0], C, pca_scope, fit_bias, 1)]
    while len(current) < max_size:
        rest = [i for i in range(len(pool)) if i not in set(current.tolist())]
        combos = np.array([sorted([*current.tolist(), r]) for r in rest], dtype=np.int64)
        results = _evaluate(dataset, pool, combos, C, pca_scope, fit_bias)
        best = _best_row(results, combos)
        current = combos[best]
        rows.append(_size_result(dataset, pool, current, results[best], C, pca_scope, fit_bias, len(combos)))
    params = {"seed": seed, "max_size": max_size, "C": C, "pca_scope": pca_scope, "fit_bias": fit_bias,
              "threads": used}
    return SearchResult(pool, rows, params)


def format_table(result: SearchResult) -> str:
    """Plain-text table: Size, Angles, Accuracy, Sensitivity, Specificity."""
    header = ("Size", "Angles", "Accuracy", "Sensitivity", "Specificity")
    body = [(str(r.size), ", ".join(r.subset), f"{100 * r.metrics.accuracy:.2f}%",
             f"{100 * r.metrics.sensitivity:.2f}%", f"{100 * r.metrics.specificity:.2f}%") for r in result.rows]
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
