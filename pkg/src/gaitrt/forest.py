"""Multi-output Random-Forest regressor built on from-scratch CART trees.

One tree handles all outputs jointly (summed per-output variance impurity).
Bootstrap draws and per-node feature subsets come from seeded integer
streams, so training is bit-reproducible across runs and platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _forest_kernels as _k
from .errors import EmptyInput, ShapeError
from .serialize import load_container, save_container
from .signal import StandardScaler


def resolve_max_features(rule, n_features: int) -> int:
    """'third' -> ceil(d/3), 'all'/None -> d, int -> clamped int."""
    if rule is None or rule == "all":
        return n_features
    if rule == "third":
        return max(1, math.ceil(n_features / 3))
    k = int(rule)
    if k < 1:
        raise ValueError(f"max_features must be >= 1, got {rule}")
    return min(k, n_features)


@dataclass
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: object = "third"
    bootstrap: bool = True

    def as_meta(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "bootstrap": self.bootstrap,
        }


@dataclass
class Tree:
    """Flat-array CART tree: feature < 0 marks leaves, children are local indices."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_outputs), per-output mean at every node

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros((X.shape[0], self.value.shape[1]))
        offsets = np.array([0, self.n_nodes], dtype=np.int64)
        _k.predict_forest_kernel(
            X, self.feature, self.threshold, self.left, self.right, self.value,
            offsets, out,
        )
        return out


def fit_tree(X, Y, params: ForestParams, rng: np.random.Generator,
             rows: np.ndarray | None = None) -> Tree:
    """Grow one CART tree; rows selects the (possibly bootstrapped) sample."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] == 0:
        raise EmptyInput("cannot fit a tree on zero rows")
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
    if rows is None:
        rows = np.arange(X.shape[0], dtype=np.int64)
    max_depth = -1 if params.max_depth is None else int(params.max_depth)
    node_seed = int(rng.integers(0, 2**63 - 1))
    feature, threshold, left, right, value, _ = _k.grow_tree(
        X, Y, rows, max_depth,
        int(params.min_samples_split), int(params.min_samples_leaf),
        resolve_max_features(params.max_features, X.shape[1]),
        node_seed,
    )
    return Tree(feature=feature.copy(), threshold=threshold.copy(),
                left=left.copy(), right=right.copy(), value=value.copy())


@dataclass
class ForestModel:
    """Trained forest: concatenated flat tree arrays plus training metadata."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    offsets: np.ndarray  # (n_trees + 1,) node offsets into the flat arrays
    params: ForestParams
    seed: int
    n_features: int
    scaler: StandardScaler | None = field(default=None)

    @property
    def n_trees(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def n_outputs(self) -> int:
        return self.value.shape[1]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return predict_forest(self, X)

    def max_depth(self) -> int:
        return int(_k.tree_depths(self.feature, self.left, self.right, self.offsets).max())

    def tree(self, i: int) -> Tree:
        lo, hi = int(self.offsets[i]), int(self.offsets[i + 1])
        return Tree(
            feature=self.feature[lo:hi].copy(),
            threshold=self.threshold[lo:hi].copy(),
            left=self.left[lo:hi] - lo,
            right=self.right[lo:hi] - lo,
            value=self.value[lo:hi].copy(),
        )


def _concat_trees(trees: list[Tree]) -> tuple[np.ndarray, ...]:
    offsets = np.zeros(len(trees) + 1, dtype=np.int64)
    for i, t in enumerate(trees):
        offsets[i + 1] = offsets[i] + t.n_nodes
    feature = np.concatenate([t.feature for t in trees])
    threshold = np.concatenate([t.threshold for t in trees])
    left = np.concatenate(
        [np.where(t.left >= 0, t.left + offsets[i], -1) for i, t in enumerate(trees)]
    ).astype(np.int32)
    right = np.concatenate(
        [np.where(t.right >= 0, t.right + offsets[i], -1) for i, t in enumerate(trees)]
    ).astype(np.int32)
    value = np.concatenate([t.value for t in trees])
    return feature, threshold, left, right, value, offsets


def fit_forest(X, Y, params: ForestParams, seed: int,
               scaler: StandardScaler | None = None) -> ForestModel:
    """Bagged forest; each tree draws its bootstrap and node seeds from an
    independent substream of `seed`, so tree order never affects results."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] == 0:
        raise EmptyInput("cannot fit a forest on zero rows")
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
    n = X.shape[0]
    streams = np.random.SeedSequence(seed).spawn(params.n_trees)
    trees = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        if params.bootstrap:
            rows = rng.integers(0, n, size=n).astype(np.int64)
        else:
            rows = np.arange(n, dtype=np.int64)
        trees.append(fit_tree(X, Y, params, rng, rows=rows))
    feature, threshold, left, right, value, offsets = _concat_trees(trees)
    return ForestModel(
        feature=feature, threshold=threshold, left=left, right=right,
        value=value, offsets=offsets, params=params, seed=int(seed),
        n_features=X.shape[1], scaler=scaler,
    )


def predict_forest(model: ForestModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ShapeError(
            f"model trained on {model.n_features} features, got {X.shape[1]}"
        )
    if model.scaler is not None:
        X = np.ascontiguousarray(model.scaler.transform(X))
    out = np.zeros((X.shape[0], model.n_outputs))
    _k.predict_forest_kernel(
        X, model.feature, model.threshold, model.left, model.right, model.value,
        model.offsets, out,
    )
    return out


def save_forest(model: ForestModel, path) -> None:
    meta = {
        "params": model.params.as_meta(),
        "seed": model.seed,
        "n_features": model.n_features,
        "has_scaler": model.scaler is not None,
    }
    arrays = {
        "feature": model.feature,
        "threshold": model.threshold,
        "left": model.left,
        "right": model.right,
        "value": model.value,
        "offsets": model.offsets,
    }
    if model.scaler is not None:
        arrays["scaler_mean"] = model.scaler.mean
        arrays["scaler_std"] = model.scaler.std
    save_container(path, "forest", meta, arrays)


def load_forest(path) -> ForestModel:
    kind, meta, arrays = load_container(path)
    if kind != "forest":
        raise ShapeError(f"{path} holds a {kind} model, expected forest")
    p = meta["params"]
    params = ForestParams(
        n_trees=p["n_trees"], max_depth=p["max_depth"],
        min_samples_split=p["min_samples_split"],
        min_samples_leaf=p["min_samples_leaf"],
        max_features=p["max_features"], bootstrap=p["bootstrap"],
    )
    scaler = None
    if meta.get("has_scaler"):
        scaler = StandardScaler(mean=arrays["scaler_mean"], std=arrays["scaler_std"])
    return ForestModel(
        feature=arrays["feature"], threshold=arrays["threshold"],
        left=arrays["left"], right=arrays["right"], value=arrays["value"],
        offsets=arrays["offsets"], params=params, seed=int(meta["seed"]),
        n_features=int(meta["n_features"]), scaler=scaler,
    )
