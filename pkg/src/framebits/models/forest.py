"""Random forest regressor built from bootstrap-resampled CART trees."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np

from ..errors import FeatureMismatch
from . import _cart
from .scaling import Standardizer


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    max_depth: int = 16
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    # None = all features; "third" = ceil(p / 3); an int is used as is
    max_features: Optional[Union[int, str]] = None
    bootstrap: bool = True

    def resolve_max_features(self, p: int) -> int:
        mf = self.max_features
        if mf is None:
            return p
        if mf == "third":
            return max(1, math.ceil(p / 3))
        if isinstance(mf, str):
            raise ValueError(f"unknown max_features {mf!r}")
        return max(1, min(p, int(mf)))


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    gain: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def predict(self, Z: np.ndarray) -> np.ndarray:
        return _cart.predict_tree(self.feature, self.threshold, self.left,
                                  self.right, self.value, Z)

    def depth(self) -> int:
        deepest = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            deepest = max(deepest, d)
            if self.feature[node] != _cart.LEAF:
                stack.append((int(self.left[node]), d + 1))
                stack.append((int(self.right[node]), d + 1))
        return deepest


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, tree_index])


def _grow(Z, y, params: ForestParams, seed: int, tree_index: int) -> Tree:
    n, p = Z.shape
    rng = tree_rng(seed, tree_index)
    if params.bootstrap:
        rows = rng.integers(0, n, size=n)
    else:
        rows = np.arange(n)
    mtry = params.resolve_max_features(p)
    if mtry < p:
        keys = rng.random((2 * n + 1, p))
    else:
        keys = np.zeros((0, p))
    arrays = _cart.build_tree(Z, y, rows.astype(np.int64), params.max_depth,
                              params.min_samples_split, params.min_samples_leaf,
                              mtry, keys)
    return Tree(*arrays)


class ForestModel:
    kind = "forest"

    def __init__(self, trees, params: ForestParams, scaler: Standardizer,
                 feature_names, frame_type: Optional[str] = None, seed: int = 0,
                 y_range=(-math.inf, math.inf), log_target: bool = False):
        self.trees = list(trees)
        self.params = params
        self.scaler = scaler
        self.feature_names = tuple(feature_names)
        self.frame_type = frame_type
        self.seed = seed
        self.y_range = tuple(float(v) for v in y_range)
        self.log_target = log_target

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise FeatureMismatch(
                f"model expects {len(self.feature_names)} columns "
                f"{self.feature_names}, got {X.shape[1]}"
            )
        return X

    def tree_predictions(self, X) -> np.ndarray:
        """Per-tree outputs, shape ``(n_trees, n_rows)``, in label space."""
        Z = np.ascontiguousarray(self.scaler.transform(self._check(X)))
        return np.stack([t.predict(Z) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        pred = self.tree_predictions(X).mean(axis=0)
        # the mean of leaf means can only leave the label range by rounding
        pred = np.clip(pred, *self.y_range)
        return np.exp(pred) if self.log_target else pred

    def impurity_totals(self) -> np.ndarray:
        totals = np.zeros(len(self.feature_names))
        for t in self.trees:
            split = t.feature != _cart.LEAF
            np.add.at(totals, t.feature[split], t.gain[split])
        return totals

    def hyperparams(self) -> dict:
        return asdict(self.params)


def fit_forest(X, y, params: Optional[ForestParams] = None, seed: int = 0,
               feature_names=None, frame_type: Optional[str] = None,
               n_jobs: int = 1, log_target: bool = False) -> ForestModel:
    """Fit ``params.n_estimators`` trees; tree ``i`` draws from RNG ``(seed, i)``.

    The forest is identical for any ``n_jobs``.
    """
    params = params or ForestParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y) or len(y) < 1:
        raise ValueError(f"bad training shapes X{X.shape} y{y.shape}")
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(X.shape[1])]
    if log_target:
        if np.any(y <= 0):
            raise ValueError("log_target needs positive labels")
        y = np.log(y)
    scaler = Standardizer.fit(X)
    Z = np.ascontiguousarray(scaler.transform(X))

    def grow(i):
        return _grow(Z, y, params, seed, i)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(grow, range(params.n_estimators)))
    else:
        trees = [grow(i) for i in range(params.n_estimators)]
    return ForestModel(trees, params, scaler, feature_names, frame_type, seed,
                       (float(y.min()), float(y.max())), log_target)


def validate_tree(tree: Tree, params: ForestParams) -> list[str]:
    """Structural problems of one tree; an empty list means it is valid."""
    problems = []
    n = tree.node_count
    seen = np.zeros(n, dtype=bool)
    stack = [(0, 0)]
    while stack:
        node, d = stack.pop()
        if seen[node]:
            problems.append(f"node {node} reached twice")
            continue
        seen[node] = True
        if d > params.max_depth:
            problems.append(f"node {node} at depth {d} > {params.max_depth}")
        if tree.feature[node] == _cart.LEAF:
            if tree.n_samples[node] < params.min_samples_leaf:
                problems.append(f"leaf {node} holds {tree.n_samples[node]} samples")
            continue
        if tree.n_samples[node] < params.min_samples_split:
            problems.append(f"split node {node} holds {tree.n_samples[node]} samples")
        lc, rc = int(tree.left[node]), int(tree.right[node])
        if tree.n_samples[lc] + tree.n_samples[rc] != tree.n_samples[node]:
            problems.append(f"node {node}: children do not partition its samples")
        stack.append((lc, d + 1))
        stack.append((rc, d + 1))
    if not seen.all():
        problems.append(f"{int((~seen).sum())} unreachable nodes")
    return problems
