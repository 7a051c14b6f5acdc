"""Random Forest for the binary C/NC problem.

Trees are grown on bootstrap samples with Gini impurity, ``sqrt(d)``
candidate features per split and midpoint thresholds (``x <= t`` goes
left). Each tree draws from its own generator seeded by
``SeedSequence(seed, spawn_key=(tree_index,))``, so tree ``i`` is the same
whatever the forest size or worker count.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyData,
    IoError,
    SchemaVersionMismatch,
    SingleClassTraining,
    ValidationError,
)

C = "C"
NC = "NC"
CLASSES = (NC, C)  # index 1 is the positive (crossing) class
MODEL_FORMAT = "crossintent-forest"
MODEL_VERSION = 1
_LEAF = -1
_MIN_DECREASE = 1e-12


def encode_labels(y) -> np.ndarray:
    """Map labels to {0: NC, 1: C}. Accepts "C"/"NC" strings, bools or 0/1."""
    arr = np.asarray(y)
    if arr.dtype.kind in "USO":
        out = np.empty(arr.shape, dtype=np.int64)
        for i, v in enumerate(arr.ravel()):
            if v == C:
                out.flat[i] = 1
            elif v == NC:
                out.flat[i] = 0
            else:
                raise ValidationError(f"unknown class label {v!r}")
        return out
    out = arr.astype(np.int64)
    if not np.all((out == 0) | (out == 1)):
        raise ValidationError("numeric labels must be 0 (NC) or 1 (C)")
    return out


def decode_label(v: int) -> str:
    return C if v else NC


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    count_nc: np.ndarray
    count_c: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):  # children are always stored after parents
            if self.feature[i] != _LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            active = feat != _LEAF
            if not active.any():
                return node
            r = rows[active]
            n = node[active]
            go_left = X[r, feat[active]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])

    def c_fraction(self, X: np.ndarray) -> np.ndarray:
        leaf = self.apply(X)
        c = self.count_c[leaf]
        return c / (c + self.count_nc[leaf])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "count_nc": self.count_nc.tolist(),
            "count_c": self.count_c.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Tree:
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["count_nc"], dtype=np.int64),
            np.asarray(d["count_c"], dtype=np.int64),
        )


def _best_split(Xt, y, rows, weights, feats):
    """Return (weighted child gini, feature, threshold) of the best split, or None.

    ``Xt`` is the feature-major (d, n) copy of the training matrix.
    """
    if len(rows) < 2:
        return None
    vals = Xt[np.ix_(feats, rows)]  # (k, m)
    # weights and labels are integers, so the running sums at value
    # boundaries are exact whatever order ties end up in
    order = np.argsort(vals, axis=1)
    sv = np.take_along_axis(vals, order, axis=1)
    wr = weights[rows].astype(float)
    w = wr[order]
    wc = w * y[rows][order]
    n_left = np.cumsum(w[:, :-1], axis=1)
    c_left = np.cumsum(wc[:, :-1], axis=1)
    total = wr.sum()
    total_c = float(wc[0].sum())
    n_right = total - n_left
    c_right = total_c - c_left
    nc_left = n_left - c_left
    nc_right = n_right - c_right
    # n * gini(node) = n - (c^2 + nc^2) / n, so the weighted child gini is
    # (total - purity) / total
    purity = (c_left * c_left + nc_left * nc_left) / n_left + (c_right * c_right + nc_right * nc_right) / n_right
    impurity = (total - purity) / total
    distinct = sv[:, :-1] < sv[:, 1:]
    if not distinct.any():
        return None
    impurity = np.where(distinct, impurity, np.inf)
    col, pos = np.unravel_index(int(np.argmin(impurity)), impurity.shape)
    lo, hi = sv[col, pos], sv[col, pos + 1]
    thr = lo + (hi - lo) / 2
    if not lo <= thr < hi:
        thr = lo
    return float(impurity[col, pos]), int(feats[col]), float(thr)


def grow_tree(X, y, weights, max_depth: int, max_features: int, rng: np.random.Generator, Xt=None) -> Tree:
    """Grow one tree on the rows with positive ``weights`` (bootstrap counts)."""
    d = X.shape[1]
    if Xt is None:
        Xt = np.ascontiguousarray(X.T)
    feature, threshold, left, right, cnt_nc, cnt_c = [], [], [], [], [], []

    def new_node(rows):
        w = weights[rows]
        c = int((w * y[rows]).sum())
        n = int(w.sum())
        feature.append(_LEAF)
        threshold.append(0.0)
        left.append(_LEAF)
        right.append(_LEAF)
        cnt_nc.append(n - c)
        cnt_c.append(c)
        return len(feature) - 1

    root_rows = np.flatnonzero(weights > 0)
    stack = [(new_node(root_rows), root_rows, 0)]
    while stack:
        node, rows, depth = stack.pop()
        n = cnt_nc[node] + cnt_c[node]
        if depth >= max_depth or n < 2 or cnt_c[node] == 0 or cnt_nc[node] == 0:
            continue
        parent = 1.0 - (cnt_c[node] / n) ** 2 - (cnt_nc[node] / n) ** 2
        feats = rng.choice(d, size=max_features, replace=False)
        split = _best_split(Xt, y, rows, weights, feats)
        if split is None or split[0] >= parent - _MIN_DECREASE:
            continue
        _, f, t = split
        go_left = X[rows, f] <= t
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node] = f
        threshold[node] = t
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        # right pushed first so the left subtree is expanded (and numbered) first
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))
    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(cnt_nc, dtype=np.int64),
        np.asarray(cnt_c, dtype=np.int64),
    )


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tree_index,)))


def resolve_max_features(max_features, d: int) -> int:
    if max_features in (None, "sqrt"):
        return max(1, int(math.isqrt(d)))
    if max_features == "all":
        return d
    k = int(max_features)
    if not 1 <= k <= d:
        raise ValidationError(f"max_features must lie in [1, {d}], got {k}")
    return k


@dataclass
class ForestModel:
    trees: list[Tree]
    max_depth: int
    feature_dim: int
    seed: int
    max_features: int
    classes: tuple[str, str] = CLASSES
    metadata: dict = field(default_factory=dict)
    oob_accuracy: float | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def truncated(self, n_trees: int) -> ForestModel:
        """The forest made of the first ``n_trees`` trees (identical to training that many)."""
        return ForestModel(self.trees[:n_trees], self.max_depth, self.feature_dim, self.seed, self.max_features)

    def predict_proba(self, X) -> np.ndarray | float:
        """Probability of C: mean over trees of the leaf's C fraction."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = X[None] if single else X
        if X2.ndim != 2 or X2.shape[1] != self.feature_dim:
            raise DimensionMismatch(f"expected {self.feature_dim} features, got shape {X.shape}")
        acc = np.zeros(X2.shape[0])
        for t in self.trees:
            acc += t.c_fraction(X2)
        p = acc / len(self.trees)
        return float(p[0]) if single else p

    def classify(self, X, threshold: float = 0.5):
        p = self.predict_proba(X)
        if np.ndim(p) == 0:
            return C if p > threshold else NC
        return np.where(np.asarray(p) > threshold, C, NC)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "max_features": self.max_features,
            "feature_dim": self.feature_dim,
            "seed": self.seed,
            "classes": list(self.classes),
            "oob_accuracy": self.oob_accuracy,
            "metadata": self.metadata,
            "trees": [t.to_dict() for t in self.trees],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> ForestModel:
        if d.get("format") != MODEL_FORMAT:
            raise ValidationError(f"not a forest model document (format={d.get('format')!r})")
        if d.get("version") != MODEL_VERSION:
            raise SchemaVersionMismatch(f"model version {d.get('version')} != {MODEL_VERSION}")
        trees = [Tree.from_dict(t) for t in d["trees"]]
        if len(trees) != d["n_trees"]:
            raise ValidationError("n_trees does not match the stored trees")
        return cls(
            trees,
            int(d["max_depth"]),
            int(d["feature_dim"]),
            int(d["seed"]),
            int(d["max_features"]),
            tuple(d["classes"]),
            dict(d.get("metadata") or {}),
            d.get("oob_accuracy"),
        )

    @classmethod
    def loads(cls, text: str) -> ForestModel:
        try:
            return cls.from_dict(json.loads(text))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"malformed model document: {exc}") from exc

    def save(self, path) -> None:
        atomic_write_text(path, self.dumps())

    @classmethod
    def load(cls, path) -> ForestModel:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise IoError(f"cannot read model {path}: {exc}") from exc
        return cls.loads(text)


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def train_forest(
    X,
    y,
    n_trees: int = 400,
    max_depth: int = 15,
    seed: int = 0,
    *,
    max_features="sqrt",
    row_ids=None,
    n_jobs: int = 1,
    oob: bool = False,
    bootstrap: bool = True,
) -> ForestModel:
    """Train a forest.

    ``row_ids`` (unique, sortable) make the bootstrap draw rows by id
    rather than by position, so shuffling the rows together with their ids
    leaves every tree unchanged.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyData(f"X must be a non-empty 2-D matrix, got shape {X.shape}")
    yi = encode_labels(y)
    n, d = X.shape
    if yi.shape != (n,):
        raise DimensionMismatch(f"{yi.size} labels for {n} rows")
    if n < 2:
        raise EmptyData("need at least 2 training rows")
    if yi.min() == yi.max():
        raise SingleClassTraining(f"all training labels are {decode_label(int(yi[0]))}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("training features must be finite")
    if n_trees < 1 or max_depth < 1:
        raise ValidationError("n_trees and max_depth must be >= 1")
    k = resolve_max_features(max_features, d)
    Xt = np.ascontiguousarray(X.T)
    order = np.arange(n) if row_ids is None else np.argsort(np.asarray(row_ids), kind="stable")

    def build(i):
        rng = tree_rng(seed, i)
        if bootstrap:
            weights = np.bincount(order[rng.integers(0, n, n)], minlength=n)
        else:
            weights = np.ones(n, dtype=np.int64)
        return grow_tree(X, yi, weights, max_depth, k, rng, Xt), weights

    if n_jobs == 1:
        built = [build(i) for i in range(n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as pool:
            built = list(pool.map(build, range(n_trees)))
    trees = [t for t, _ in built]
    model = ForestModel(trees, max_depth, d, int(seed), k)
    if oob:
        votes = np.zeros(n)
        seen = np.zeros(n)
        for t, w in built:
            out = w == 0
            if out.any():
                votes[out] += t.c_fraction(X[out])
                seen[out] += 1
        has = seen > 0
        if has.any():
            pred = (votes[has] / seen[has]) > 0.5
            model.oob_accuracy = float(np.mean(pred == (yi[has] == 1)))
    return model


def predict_proba(m: ForestModel, x):
    return m.predict_proba(x)


def classify(m: ForestModel, x, threshold: float = 0.5):
    return m.classify(x, threshold)
