"""Stratified k-fold grid search over forest size and depth."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData, ValidationError
from .forest import encode_labels, train_forest

DEFAULT_TREE_COUNTS = (100, 200, 300, 400, 500)
DEFAULT_DEPTHS = (7, 15, 21, 30)


@dataclass(frozen=True)
class GridSpec:
    tree_counts: tuple[int, ...] = DEFAULT_TREE_COUNTS
    depths: tuple[int, ...] = DEFAULT_DEPTHS
    folds: int = 5

    def __post_init__(self):
        if not self.tree_counts or not self.depths:
            raise ValidationError("grid axes must be non-empty")
        if self.folds < 2:
            raise ValidationError("need at least 2 folds")

    @property
    def configs(self) -> list[tuple[int, int]]:
        return [(n, d) for n in self.tree_counts for d in self.depths]


@dataclass
class GridResult:
    n_trees: int
    max_depth: int
    accuracy: float
    table: list[dict] = field(default_factory=list)


def stratified_folds(y, k: int, seed: int) -> list[np.ndarray]:
    """Split row indices into ``k`` test folds; per class, fold sizes differ by at most 1."""
    yi = encode_labels(y)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in (0, 1):
        idx = rng.permutation(np.flatnonzero(yi == cls))
        for j, row in enumerate(idx):
            # continue dealing where the previous class stopped to even out totals
            folds[(offset + j) % k].append(int(row))
        offset += len(idx)
    return [np.sort(np.asarray(f, dtype=int)) for f in folds]


def grid_search_cv(X, y, grid: GridSpec | None = None, seed: int = 0, *, n_jobs: int = 1) -> GridResult:
    """Mean k-fold accuracy of every (n_trees, max_depth) configuration.

    The best configuration maximises accuracy; ties go to fewer trees, then
    smaller depth. Per fold and depth only the largest forest is trained:
    tree ``i`` does not depend on the forest size, so its prefixes are the
    smaller forests.
    """
    grid = grid or GridSpec()
    X = np.asarray(X, dtype=float)
    yi = encode_labels(y)
    counts = np.bincount(yi, minlength=2)
    if X.shape[0] < grid.folds or counts.min() < grid.folds:
        raise InsufficientData(
            f"{grid.folds}-fold CV needs at least {grid.folds} samples of each class, got NC={counts[0]}, C={counts[1]}"
        )
    folds = stratified_folds(yi, grid.folds, seed)
    max_trees = max(grid.tree_counts)
    scores = {cfg: [] for cfg in grid.configs}
    all_rows = np.arange(X.shape[0])
    for test in folds:
        train = np.setdiff1d(all_rows, test)
        for depth in grid.depths:
            model = train_forest(X[train], yi[train], max_trees, depth, seed, n_jobs=n_jobs)
            # running sum of per-tree C fractions gives every prefix forest at once
            running = np.zeros(len(test))
            by_size = {}
            for i, tree in enumerate(model.trees, start=1):
                running += tree.c_fraction(X[test])
                if i in grid.tree_counts:
                    pred = (running / i) > 0.5
                    by_size[i] = float(np.mean(pred == (yi[test] == 1)))
            for n in grid.tree_counts:
                scores[(n, depth)].append(by_size[n])
    table = [
        {"n_trees": n, "max_depth": d, "mean_accuracy": math.fsum(scores[(n, d)]) / grid.folds,
         "fold_accuracies": scores[(n, d)]}
        for n, d in grid.configs
    ]
    best = min(table, key=lambda r: (-r["mean_accuracy"], r["n_trees"], r["max_depth"]))
    return GridResult(best["n_trees"], best["max_depth"], best["mean_accuracy"], table)
