import numpy as np
import pytest

from crossintent.errors import InsufficientData
from crossintent.forest import C, NC
from crossintent.model_selection import GridSpec, grid_search_cv, stratified_folds


def test_default_grid_has_twenty_configs():
    g = GridSpec()
    assert len(g.configs) == 20
    assert g.tree_counts == (100, 200, 300, 400, 500) and g.depths == (7, 15, 21, 30)


def test_stratified_folds_partition_and_balance():
    y = np.array([C] * 23 + [NC] * 17)
    folds = stratified_folds(y, 5, seed=0)
    allrows = np.sort(np.concatenate(folds))
    np.testing.assert_array_equal(allrows, np.arange(40))
    for cls in (C, NC):
        sizes = [int(np.sum(y[f] == cls)) for f in folds]
        assert max(sizes) - min(sizes) <= 1
    assert max(len(f) for f in folds) - min(len(f) for f in folds) <= 1


def test_grid_search_table_and_tie_break():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 1, (40, 3)), rng.normal(8, 1, (40, 3))])
    y = np.array([NC] * 40 + [C] * 40)
    grid = GridSpec((2, 4, 6), (1, 3))
    res = grid_search_cv(X, y, grid, seed=0)
    assert len(res.table) == 6
    assert all(r["mean_accuracy"] == 1.0 for r in res.table)
    assert (res.n_trees, res.max_depth) == (2, 1)  # fewest trees, then smallest depth


def test_insufficient_data():
    X = np.zeros((8, 2))
    y = [C] * 4 + [NC] * 4
    with pytest.raises(InsufficientData):
        grid_search_cv(X, y, GridSpec((1,), (1,)), seed=0)
